"""Bottom profiles, rest height, and the logarithmic surface variable.

The rest water column is h_b = 1 - beta*b and must stay strictly positive.
The modified evolution system replaces the surface elevation zeta by

    q = log(1 + eps*zeta/h_b) / eps,

which is admissible exactly while 1 + eps*zeta/h_b > 0. At eps = 0 every
formula below degenerates to its analytic limit rather than dividing by eps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import AdmissibilityWarning, LogDomainError, NonpositiveDepthError
from .spectral import Field, Grid, VecField, grad_arr

__all__ = [
    "Bathymetry",
    "build_bathymetry",
    "water_height",
    "zeta_to_q",
    "q_to_zeta",
    "q_positivity_factor",
    "PROFILES",
]

ADMISSIBILITY_MARGIN = 0.1


def _wrapped_offset(x: np.ndarray, center: float, L: float) -> np.ndarray:
    # minimum-image distance so bumps are exactly periodic
    return (x - center + 0.5 * L) % L - 0.5 * L


def _gaussian(grid: Grid, center, width: float, height: float) -> np.ndarray:
    centers = center if isinstance(center, (tuple, list)) else (center,) * grid.d
    r2 = np.zeros(grid.shape)
    for xc, c in zip(grid.x, centers):
        dxi = _wrapped_offset(xc, c, grid.L)
        r2 = r2 + dxi * dxi
    return height * np.exp(-0.5 * r2 / width**2)


def _profile_flat(grid: Grid, params) -> np.ndarray:
    return np.zeros(grid.shape)


def _profile_gaussian_bump(grid: Grid, params) -> np.ndarray:
    center = params.get("center", 0.5 * grid.L)
    width = params.get("width", grid.L / 8.0)
    height = params.get("height", 1.0)
    return _gaussian(grid, center, width, height)


def _profile_sinusoidal(grid: Grid, params) -> np.ndarray:
    k = int(params.get("k", 1))
    amplitude = params.get("amplitude", 1.0)
    out = amplitude * np.ones(grid.shape)
    for xc in grid.x:
        out = out * np.sin(2.0 * np.pi * k * xc / grid.L)
    return out


def _profile_two_bumps(grid: Grid, params) -> np.ndarray:
    c1 = params.get("center1", grid.L / 3.0)
    c2 = params.get("center2", 2.0 * grid.L / 3.0)
    w1 = params.get("width1", grid.L / 10.0)
    w2 = params.get("width2", grid.L / 10.0)
    h1 = params.get("height1", 1.0)
    h2 = params.get("height2", 0.5)
    return _gaussian(grid, c1, w1, h1) + _gaussian(grid, c2, w2, h2)


PROFILES = {
    "flat": _profile_flat,
    "gaussian_bump": _profile_gaussian_bump,
    "sinusoidal": _profile_sinusoidal,
    "two_bumps": _profile_two_bumps,
}


@dataclass(frozen=True, eq=False)
class Bathymetry:
    """Bottom profile b with its rest-height caches.

    Stores h_b = 1 - beta*b, its twisted gradient, and the powers the
    dispersive operators consume. Construction fails if min h_b <= 0.
    """

    grid: Grid
    beta: float
    b: Field

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.b.grid != self.grid:
            raise ValueError("profile grid mismatch")
        if self.h_min <= 0.0:
            raise NonpositiveDepthError(
                f"rest height min(1 - beta*b) = {self.h_min:.6g} is not positive"
            )

    @cached_property
    def hb(self) -> np.ndarray:
        return 1.0 - self.beta * self.b.samples

    @cached_property
    def h_min(self) -> float:
        return float(self.hb.min())

    @cached_property
    def inv_hb(self) -> np.ndarray:
        return 1.0 / self.hb

    @cached_property
    def grad_b(self) -> list[np.ndarray]:
        """Twisted gradient of the raw profile b."""
        return grad_arr(self.grid, self.b.samples)

    @cached_property
    def grad_hb(self) -> VecField:
        return VecField.from_arrays(self.grid, [-self.beta * g for g in self.grad_b])

    @property
    def is_flat(self) -> bool:
        return self.beta == 0.0 or not np.any(self.b.samples)

    @property
    def hb_field(self) -> Field:
        return Field(self.grid, self.hb)


def build_bathymetry(grid: Grid, profile: str, beta: float, params=None) -> Bathymetry:
    """Construct a named bottom profile; raises NonpositiveDepthError if drowned."""
    if profile not in PROFILES:
        raise ValueError(f"unknown profile '{profile}', choose from {sorted(PROFILES)}")
    b = Field(grid, PROFILES[profile](grid, dict(params or {})))
    return Bathymetry(grid=grid, beta=beta, b=b)


def water_height(zeta: Field, eps: float, bath: Bathymetry):
    """Total column h = 1 + eps*zeta - beta*b.

    Never raises: returns (h, dry) where dry flags min h <= 0 so the caller
    decides whether that terminates a run.
    """
    h = bath.hb + eps * zeta.samples
    dry = bool(h.min() <= 0.0)
    return Field(zeta.grid, h), dry


def _check_admissibility(ratio_min: float) -> None:
    # ratio = 1 + eps*zeta/h_b must stay positive for the log to exist
    if ratio_min <= 0.0:
        raise LogDomainError(
            f"min(1 + eps*zeta/h_b) = {ratio_min:.6g} leaves the log domain"
        )
    if ratio_min < ADMISSIBILITY_MARGIN:
        warnings.warn(
            f"surface within {ratio_min:.3g} of the admissibility boundary",
            AdmissibilityWarning,
            stacklevel=3,
        )


def zeta_to_q_arr(zeta: np.ndarray, eps: float, bath: Bathymetry) -> np.ndarray:
    x = eps * zeta * bath.inv_hb
    _check_admissibility(float(1.0 + x.min()))
    if eps == 0.0:
        return zeta * bath.inv_hb
    return np.log1p(x) / eps


def q_to_zeta_arr(q: np.ndarray, eps: float, bath: Bathymetry) -> np.ndarray:
    if eps == 0.0:
        return bath.hb * q
    return bath.hb * np.expm1(eps * q) / eps


def zeta_to_q(zeta: Field, eps: float, bath: Bathymetry) -> Field:
    """Forward log variable q = log(1 + eps*zeta/h_b)/eps; zeta/h_b at eps=0."""
    return Field(zeta.grid, zeta_to_q_arr(zeta.samples, eps, bath))


def q_to_zeta(q: Field, eps: float, bath: Bathymetry) -> Field:
    """Inverse map zeta = h_b*(exp(eps*q) - 1)/eps; h_b*q at eps=0. Total."""
    return Field(q.grid, q_to_zeta_arr(q.samples, eps, bath))


def q_positivity_factor(zeta: Field, eps: float, bath: Bathymetry) -> Field:
    """Pointwise factor Q(zeta) with q = Q(zeta)*zeta.

    Closed form log1p(eps*zeta/h_b)/(eps*zeta), strictly positive on the
    admissible set; the eps*zeta -> 0 limit is 1/h_b.
    """
    x = eps * zeta.samples * bath.inv_hb
    _check_admissibility(float(1.0 + x.min()))
    small = np.abs(x) < 1e-12
    safe = np.where(small, 1.0, x)
    factor = np.where(
        small,
        bath.inv_hb * (1.0 - 0.5 * x),
        np.log1p(safe) / (safe * bath.hb),
    )
    return Field(zeta.grid, factor)
