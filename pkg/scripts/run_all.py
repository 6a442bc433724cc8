#!/usr/bin/env python3
"""Run every preset in sequence and report a one-line result for each.

Extra arguments are passed through to each `bplab run` invocation, so
`python3 scripts/run_all.py --out /tmp/lab --jobs 4` fans the artifact
tree out under /tmp/lab with four workers per scenario. Exits nonzero if
any scenario fails its verdicts.
"""

import sys
import time
from pathlib import Path

from bplab.cli import main

PRESETS = (
    "dispersion",
    "consistency",
    "longtime",
    "burgers",
    "operator_audit",
    "mollifier_study",
)

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def run_all(extra) -> int:
    worst = 0
    for name in PRESETS:
        config = CONFIG_DIR / f"{name}.yaml"
        print(f"==> {name}")
        t0 = time.perf_counter()
        code = main(["run", "--config", str(config), *extra])
        print(f"<== {name}: exit {code} ({time.perf_counter() - t0:.1f} s)")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(run_all(sys.argv[1:]))
