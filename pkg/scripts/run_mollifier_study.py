#!/usr/bin/env python3
"""Run the mollifier_study preset; extra arguments go to the CLI (--out, --jobs, --seed)."""
import sys
from pathlib import Path

from bplab.cli import main

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "mollifier_study.yaml"

if __name__ == "__main__":
    sys.exit(main(["run", "--config", str(CONFIG), *sys.argv[1:]]))
