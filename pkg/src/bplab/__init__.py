"""Numerical laboratory for dispersive shallow-water systems over bathymetry.

Periodic pseudospectral discretizations of a shallow-water / Boussinesq-
Peregrine model family, the elliptic operators their velocity equations
invert, energy diagnostics, and a small scenario driver for reproducible
experiments. The usual entry points:

    from bplab import Grid, ModelParams, StepperConfig, run
    bplab run --config configs/dispersion.yaml        (installed CLI)
"""

from .bathymetry import (
    PROFILES,
    Bathymetry,
    build_bathymetry,
    q_positivity_factor,
    q_to_zeta,
    water_height,
    zeta_to_q,
)
from .diagnostics import (
    DiagnosticsRecord,
    ShockFit,
    build_records,
    burgers_shock_time,
    detect_gradient_blowup,
    energy_EN,
    energy_bp,
    energy_theorem_E,
    estimate_order,
    exact_dispersion,
    measure_dispersion,
)
from .errors import (
    BplabError,
    ConfigError,
    DegenerateFitError,
    DryStateError,
    InsufficientSamplesError,
    LogDomainError,
    NonpositiveDepthError,
    NoShockError,
    SolverDivergenceError,
)
from .models import (
    MODELS,
    ModelParams,
    ModelState,
    RHSBundle,
    build_handles,
    make_rhs,
    max_linear_frequency,
)
from .operators import KINDS, OperatorHandle, build_handle
from .scenarios import (
    SCENARIOS,
    ExperimentConfig,
    ScenarioResult,
    load_config,
    run_scenario,
)
from .spectral import Field, Grid, VecField, inner, l2_norm, sobolev_norm
from .timeloop import CFL_LIMITS, TERMINATIONS, StepperConfig, Trajectory, run, step

__version__ = "0.1.0"

__all__ = [
    "Bathymetry",
    "BplabError",
    "CFL_LIMITS",
    "ConfigError",
    "DegenerateFitError",
    "DiagnosticsRecord",
    "DryStateError",
    "ExperimentConfig",
    "Field",
    "Grid",
    "InsufficientSamplesError",
    "KINDS",
    "LogDomainError",
    "MODELS",
    "ModelParams",
    "ModelState",
    "NoShockError",
    "NonpositiveDepthError",
    "OperatorHandle",
    "PROFILES",
    "RHSBundle",
    "SCENARIOS",
    "ScenarioResult",
    "ShockFit",
    "SolverDivergenceError",
    "StepperConfig",
    "TERMINATIONS",
    "Trajectory",
    "VecField",
    "build_bathymetry",
    "build_handle",
    "build_handles",
    "build_records",
    "burgers_shock_time",
    "detect_gradient_blowup",
    "energy_EN",
    "energy_bp",
    "energy_theorem_E",
    "estimate_order",
    "exact_dispersion",
    "inner",
    "l2_norm",
    "load_config",
    "make_rhs",
    "max_linear_frequency",
    "measure_dispersion",
    "q_positivity_factor",
    "q_to_zeta",
    "run",
    "run_scenario",
    "sobolev_norm",
    "step",
    "water_height",
    "zeta_to_q",
    "__version__",
]
