"""Energies, dispersion measurement, order fits, and blow-up detection.

Everything here is a pure function of recorded data: trajectories go in,
numbers come out. The three energies written to run diagnostics are

    energy_bp         0.5*|zeta|_2^2 + 0.5*<h_b(I + mu*Tb)V, V>
    energy_EN         |zeta|_{H^N} + sqrt(mu)*|grad zeta|_{H^N}
                      + |V|_{H^N} + sqrt(mu)*|grad V|_{H^N}
    energy_theorem_E  |zeta|_{H^s}^2 + |V|_{H^s}^2 + mu*|div V|_{H^s}^2

all on the surface/velocity pair; trajectories of the log-variable system
are converted back to the surface before evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .bathymetry import Bathymetry, q_to_zeta_arr
from .errors import (
    DegenerateFitError,
    InsufficientSamplesError,
    NoShockError,
)
from .operators import _grad_stack, get_weighted_ops
from .spectral import (
    Field,
    Grid,
    VecField,
    div_arr,
    grad_arr,
    quad_inner_arr,
    sobolev_norm_arr,
)

__all__ = [
    "DiagnosticsRecord",
    "energy_bp",
    "energy_EN",
    "energy_theorem_E",
    "build_records",
    "exact_dispersion",
    "fit_oscillation_frequency",
    "measure_dispersion",
    "estimate_order",
    "burgers_shock_time",
    "ShockFit",
    "detect_gradient_blowup",
]


# ---------------------------------------------------------------------------
# energies


def _energy_bp_arr(
    zeta: np.ndarray, V: np.ndarray, mu: float, bath: Bathymetry
) -> float:
    g = bath.grid
    ops = get_weighted_ops(bath)
    wv = ops.w_imutb(V, mu)
    kinetic = sum(quad_inner_arr(g, wv[j], V[j]) for j in range(g.d))
    potential = quad_inner_arr(g, zeta, zeta)
    return 0.5 * potential + 0.5 * kinetic


def energy_bp(zeta: Field, vbar: VecField, mu: float, bath: Bathymetry) -> float:
    """Quadratic energy of the dispersive system; conserved on flat linear runs."""
    return _energy_bp_arr(zeta.samples, np.stack(vbar.arrays()), mu, bath)


def _energy_EN_arr(
    grid: Grid, zeta: np.ndarray, V: Optional[np.ndarray], mu: float, N: float
) -> float:
    smu = np.sqrt(mu)
    out = sobolev_norm_arr(grid, zeta, N)
    gz = _grad_stack(grid, zeta)
    out += smu * np.sqrt(
        sum(sobolev_norm_arr(grid, gz[j], N) ** 2 for j in range(grid.d))
    )
    if V is not None:
        out += np.sqrt(sum(sobolev_norm_arr(grid, v, N) ** 2 for v in V))
        gv2 = 0.0
        for v in V:
            gvi = _grad_stack(grid, v)
            gv2 += sum(sobolev_norm_arr(grid, gvi[j], N) ** 2 for j in range(grid.d))
        out += smu * np.sqrt(gv2)
    return float(out)


def energy_EN(
    zeta: Field, vbar: Optional[VecField], mu: float, N: float = 3.0
) -> float:
    """Layered H^N energy; the gradient blocks carry the sqrt(mu) weight."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    V = None if vbar is None else np.stack(vbar.arrays())
    return _energy_EN_arr(zeta.grid, zeta.samples, V, mu, N)


def _energy_theorem_arr(
    grid: Grid, zeta: np.ndarray, V: Optional[np.ndarray], mu: float, s: float
) -> float:
    out = sobolev_norm_arr(grid, zeta, s) ** 2
    if V is not None:
        out += sum(sobolev_norm_arr(grid, v, s) ** 2 for v in V)
        out += mu * sobolev_norm_arr(grid, div_arr(grid, V), s) ** 2
    return float(out)


def energy_theorem_E(
    zeta: Field, vbar: Optional[VecField], mu: float, s: float = 3.0
) -> float:
    """Squared state size |U|_{H^s}^2 + mu*|div V|_{H^s}^2 (no root taken)."""
    V = None if vbar is None else np.stack(vbar.arrays())
    return _energy_theorem_arr(zeta.grid, zeta.samples, V, mu, s)


# ---------------------------------------------------------------------------
# per-record assembly


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One recorded instant; serializes to one CSV row."""

    time: float
    EN: float
    E_bp: float
    E_thm: float
    sup_U: float
    sup_gradU: float
    mode_amplitudes: Optional[np.ndarray] = None

    @property
    def is_finite(self) -> bool:
        vals = [self.time, self.EN, self.E_bp, self.E_thm, self.sup_U, self.sup_gradU]
        core = all(np.isfinite(v) or np.isnan(v) for v in vals)
        return core


def build_records(
    traj, bath: Bathymetry, N: float = 3.0, s: Optional[float] = None
) -> list:
    """Energy/monitor records over a trajectory.

    The log-variable scalar is converted to the surface before every
    energy; Burgers has no surface or velocity, so its E_bp is NaN and its
    other energies use the profile alone.
    """
    if s is None:
        s = N
    g = traj.grid
    model = traj.params.model
    mu = traj.params.mu
    eps = traj.params.eps
    out = []
    for i, U in enumerate(traj.states):
        scalar = U[0]
        V = U[1:] if U.shape[0] > 1 else None
        if model == "mbp":
            scalar = q_to_zeta_arr(scalar, eps, bath)
        en = _energy_EN_arr(g, scalar, V, mu, N)
        ethm = _energy_theorem_arr(g, scalar, V, mu, s)
        ebp = np.nan if V is None else _energy_bp_arr(scalar, V, mu, bath)
        amps = None
        if traj.mode_history is not None:
            amps = np.abs(traj.mode_history[i])
        out.append(
            DiagnosticsRecord(
                time=float(traj.times[i]),
                EN=en,
                E_bp=ebp,
                E_thm=ethm,
                sup_U=float(traj.sup_u[i]),
                sup_gradU=float(traj.sup_grad_u[i]),
                mode_amplitudes=amps,
            )
        )
    return out


# ---------------------------------------------------------------------------
# dispersion


def exact_dispersion(model: str, k: float, mu: float) -> float:
    """Angular frequency of a plane wave of twisted wavenumber k, flat bottom."""
    k2 = k * k
    if model == "sw":
        return float(abs(k))
    if model == "bp":
        return float(abs(k) / np.sqrt(1.0 + mu * k2 / 3.0))
    if model == "mbp":
        return float(abs(k) * np.sqrt((1.0 + mu * k2) / (1.0 + 4.0 * mu * k2 / 3.0)))
    raise ValueError(f"no dispersion relation for model {model!r}")


def _zero_crossings(times: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Linear-interpolation zero crossings of a sampled oscillation."""
    out = []
    for i in range(len(y) - 1):
        a, b = y[i], y[i + 1]
        if a == 0.0:
            if not out or out[-1] != times[i]:
                out.append(float(times[i]))
        elif a * b < 0.0:
            out.append(float(times[i] - a * (times[i + 1] - times[i]) / (b - a)))
    if len(y) and y[-1] == 0.0:
        out.append(float(times[-1]))
    return np.array(out)


def fit_oscillation_frequency(times: np.ndarray, series: np.ndarray) -> float:
    """Frequency from the zero crossings of Re <c(t), c(0)>.

    Consecutive crossings of a cosine are pi/omega apart, so a straight
    line through (index, crossing time) gives omega = pi/slope. Requires
    at least six crossings (three full periods).
    """
    times = np.asarray(times, dtype=float)
    series = np.asarray(series)
    if times.shape != series.shape:
        raise ValueError("times and series must have matching shapes")
    y = np.real(series * np.conj(series[0]))
    crossings = _zero_crossings(times, y)
    if len(crossings) < 6:
        raise InsufficientSamplesError(
            f"found {len(crossings)} zero crossings, need 6 (three periods);"
            " run longer or record more often"
        )
    slope = np.polyfit(np.arange(len(crossings)), crossings, 1)[0]
    return float(np.pi / slope)


def measure_dispersion(trajectory, k) -> float:
    """Measured frequency of tracked mode k along a linear run.

    k must be one of the trajectory's tracked modes (an index in d=1, an
    index pair in d=2). Compare with exact_dispersion for the deviation.
    """
    if trajectory.mode_history is None:
        raise ValueError("trajectory has no tracked modes")
    track = list(trajectory.config.track_modes)
    key = tuple(k) if isinstance(k, (tuple, list)) else k
    norm = [tuple(m) if isinstance(m, (tuple, list)) else m for m in track]
    if key not in norm:
        raise ValueError(f"mode {k!r} was not tracked (have {track!r})")
    pos = norm.index(key)
    return fit_oscillation_frequency(trajectory.times, trajectory.mode_history[:, pos])


# ---------------------------------------------------------------------------
# rate fits


def estimate_order(pairs: Sequence) -> float:
    """Least-squares slope of log(error) against log(parameter).

    pairs is a sequence of (parameter, error). Raises DegenerateFitError
    when there are fewer than three points, values are nonpositive, the
    parameters do not vary, or the errors sit at the noise floor.
    """
    arr = np.asarray(list(pairs), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
        raise DegenerateFitError("need at least three (parameter, error) pairs")
    scales, errors = arr[:, 0], arr[:, 1]
    if np.any(scales <= 0) or np.any(errors <= 0):
        raise DegenerateFitError("parameters and errors must be positive")
    ls = np.log(scales)
    if np.ptp(ls) < 1e-12:
        raise DegenerateFitError("parameters are all equal")
    if errors.max() < 1e-14 or errors.max() / errors.min() < 1.2:
        raise DegenerateFitError("errors are at the noise floor; nothing to fit")
    return float(np.polyfit(ls, np.log(errors), 1)[0])


# ---------------------------------------------------------------------------
# gradient blow-up


def burgers_shock_time(u0: Field, eps: float) -> float:
    """Characteristics-crossing time -1/(eps*min u0') of the transport flow."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    slope_min = float(grad_arr(u0.grid, u0.samples)[0].min())
    if eps == 0.0 or slope_min >= 0.0:
        raise NoShockError(
            "no characteristics cross: eps = 0 or u0 is nondecreasing"
        )
    return -1.0 / (eps * slope_min)


@dataclass(frozen=True)
class ShockFit:
    """Detected gradient blow-up: crossing time, extrapolated time, rate."""

    t_detect: float
    t_extrapolated: float
    slope: float


def detect_gradient_blowup(
    times: np.ndarray, sup_grad: np.ndarray, threshold: float = 100.0
) -> ShockFit:
    """Locate gradient blow-up from the recorded sup|grad u| history.

    t_detect interpolates the first threshold crossing. The reciprocal of
    a steepening profile's gradient decays linearly to zero, so a line
    through its tail pins the blow-up time sharper than the crossing does;
    slope is the power of (T - t) in a log-log fit and sits near -1 for
    genuine gradient blow-up.
    """
    times = np.asarray(times, dtype=float)
    sup_grad = np.asarray(sup_grad, dtype=float)
    if times.shape != sup_grad.shape:
        raise ValueError("times and sup_grad must have matching shapes")
    above = np.nonzero(sup_grad >= threshold)[0]
    if len(above) == 0:
        raise NoShockError(
            f"sup|grad u| never reached {threshold} (max {sup_grad.max():.3g})"
        )
    j = int(above[0])
    if j == 0:
        t_detect = float(times[0])
    else:
        a, b = sup_grad[j - 1], sup_grad[j]
        t_detect = float(
            times[j - 1] + (threshold - a) * (times[j] - times[j - 1]) / (b - a)
        )

    # Fit window: clearly steepened, but capped well below the threshold.
    # Once the front narrows toward the grid scale the recorded gradient
    # lags the true growth, so near-detection records would drag the line
    # shallow and wreck the extrapolation.
    sel = np.nonzero(
        (sup_grad >= 4.0 * sup_grad[0])
        & (sup_grad <= 0.25 * threshold)
        & (times <= times[j])
    )[0]
    if len(sel) < 3:
        raise InsufficientSamplesError(
            "too few steepening records to fit; lower the stride"
        )
    y = 1.0 / sup_grad[sel]
    coef = np.polyfit(times[sel], y, 1)
    if coef[0] >= 0:
        raise DegenerateFitError("reciprocal gradient is not decaying")
    t_ext = float(-coef[1] / coef[0])
    tau = t_ext - times[sel]
    if np.any(tau <= 0):
        raise DegenerateFitError("extrapolated blow-up precedes fitted records")
    slope = float(np.polyfit(np.log(tau), np.log(sup_grad[sel]), 1)[0])
    return ShockFit(t_detect=t_detect, t_extrapolated=t_ext, slope=slope)
