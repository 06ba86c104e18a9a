"""External potentials V, interaction kernels w and their admissibility checks."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy import fft as sfft

from .grid import ComplexField, Grid

__all__ = [
    "PotentialSpec",
    "InteractionSpec",
    "CouplingConfig",
    "UnderResolvedWarning",
    "ROLLNIK_THRESHOLD",
    "KATO_THRESHOLD",
    "sample_potential",
    "derivative_sup_norms",
    "sample_interaction",
    "scaled_interaction",
    "interaction_integral",
    "second_moment",
    "check_rollnik",
    "check_decay_condition",
    "tight_decay_constant",
]

ROLLNIK_THRESHOLD = (4.0 * np.pi) ** 2
KATO_THRESHOLD = 4.0 * np.pi

PotentialFamily = Literal["zero", "gaussian_bump", "sech_squared_well", "cosine_bump"]
InteractionFamily = Literal["gaussian", "compact_bump", "delta_limit"]


class UnderResolvedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PotentialSpec:
    """A bounded external potential with bounded first and second derivatives."""

    family: PotentialFamily = "zero"
    amplitude: float = 0.0
    width: float = 1.0
    center: tuple[float, ...] = ()

    def __post_init__(self):
        if self.family not in ("zero", "gaussian_bump", "sech_squared_well", "cosine_bump"):
            raise ValueError(f"unknown potential family {self.family!r}")
        if not self.width > 0:
            raise ValueError("potential width must be positive")

    def profile(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        a, s = self.amplitude, self.width
        if self.family == "zero":
            return np.zeros_like(r)
        if self.family == "gaussian_bump":
            return a * np.exp(-0.5 * (r / s) ** 2)
        if self.family == "sech_squared_well":
            return a / np.cosh(r / s) ** 2
        # cosine_bump: C^1 at the support edge, second derivative bounded.
        inside = r < s
        return np.where(inside, a * np.cos(0.5 * np.pi * np.minimum(r, s) / s) ** 2, 0.0)


@dataclass(frozen=True)
class InteractionSpec:
    """Even, real interaction kernel ``w(z) = amplitude * profile(|z| / width)``.

    ``delta_limit`` is a unit-mass Gaussian scaled by ``amplitude``, so its
    integral stays ``amplitude`` as ``width`` shrinks.
    """

    family: InteractionFamily = "gaussian"
    amplitude: float = 1.0
    width: float = 1.0
    decay_exponent: float = np.inf
    decay_constant: float = 1.0

    def __post_init__(self):
        if self.family not in ("gaussian", "compact_bump", "delta_limit"):
            raise ValueError(f"unknown interaction family {self.family!r}")
        if not self.width > 0:
            raise ValueError("interaction width must be positive")
        if not self.decay_exponent > 3:
            raise ValueError("decay exponent gamma must exceed 3")
        if not self.decay_constant > 0:
            raise ValueError("decay constant C_w must be positive")

    def profile(self, r: np.ndarray, dim: int = 3) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        a, s = self.amplitude, self.width
        if self.family == "gaussian":
            return a * np.exp(-0.5 * (r / s) ** 2)
        if self.family == "delta_limit":
            return a * (2.0 * np.pi * s**2) ** (-dim / 2) * np.exp(-0.5 * (r / s) ** 2)
        q = np.minimum(r / s, 1.0)
        with np.errstate(divide="ignore", over="ignore"):
            bump = np.exp(1.0 - 1.0 / (1.0 - q**2))
        return np.where(r < s, a * bump, 0.0)


@dataclass(frozen=True)
class CouplingConfig:
    lam: float = 0.0
    beta: float = 0.0
    N: int = 1

    def __post_init__(self):
        _check_beta(self.beta)
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("particle number N must be a positive integer")


def _check_beta(beta: float) -> None:
    if not (0.0 <= beta < 1.0 / 3.0):
        raise ValueError(f"beta must satisfy 0 <= beta < 1/3, got {beta}")


def _centered_radius(grid: Grid, center: tuple[float, ...]) -> np.ndarray:
    c = tuple(center) or (0.0,) * grid.dim
    if len(c) != grid.dim:
        raise ValueError(f"center has {len(c)} components, grid is {grid.dim}-dimensional")
    return np.sqrt(sum((x - ci) ** 2 for x, ci in zip(grid.mesh(), c)))


def sample_potential(spec: PotentialSpec, grid: Grid) -> ComplexField:
    return ComplexField(grid, spec.profile(_centered_radius(grid, spec.center)))


def derivative_sup_norms(V: ComplexField) -> dict[str, float]:
    """Sup norms of V and of its central-difference first and second derivatives."""
    v = V.values.real
    h = V.grid.spacing
    grad = 0.0
    hess = 0.0
    for ax in range(V.grid.dim):
        d1 = (np.roll(v, -1, ax) - np.roll(v, 1, ax)) / (2 * h)
        d2 = (np.roll(v, -1, ax) - 2 * v + np.roll(v, 1, ax)) / h**2
        grad = max(grad, float(np.max(np.abs(d1))))
        hess = max(hess, float(np.max(np.abs(d2))))
    return {"sup": float(np.max(np.abs(v))), "sup_grad": grad, "sup_hess": hess}


def sample_interaction(spec: InteractionSpec, grid: Grid) -> ComplexField:
    return ComplexField(grid, spec.profile(grid.radius, grid.dim))


def scaled_interaction(spec: InteractionSpec, N: int, beta: float, grid: Grid) -> ComplexField:
    """``w_N(x) = N^(d beta) w(N^beta x)`` sampled on the grid.

    The exponent ``d*beta`` keeps ``||w_N||_1 = ||w||_1`` in every dimension.
    """
    _check_beta(beta)
    if int(N) != N or N < 1:
        raise ValueError("N must be a positive integer")
    s = float(N) ** beta
    if spec.width / s < 4 * grid.spacing:
        warnings.warn(
            f"scaled kernel width {spec.width / s:.4g} is below 4 grid spacings ({grid.spacing:.4g})",
            UnderResolvedWarning,
            stacklevel=2,
        )
    vals = s**grid.dim * spec.profile(s * grid.radius, grid.dim)
    return ComplexField(grid, vals)


def interaction_integral(w: ComplexField) -> float:
    """``a = int w``, the coupling of the local (cubic) limit."""
    return float(np.sum(w.values.real) * w.grid.cell_volume)


def second_moment(w: ComplexField) -> float:
    """``int |x|^2 |w(x)| dx``."""
    g = w.grid
    return float(np.sum(g.radius**2 * np.abs(w.values)) * g.cell_volume)


def _padded_kernel(grid: Grid, power: int) -> np.ndarray:
    """``|z|^-power`` on the doubled lattice of displacements, FFT ordering.

    The singular cell holds the ball-of-equal-volume average, which bounds the
    true in-cell integral from above for a radially decreasing integrand.
    """
    n, h = grid.points_per_axis, grid.spacing
    disp = np.where(np.arange(2 * n) < n, np.arange(2 * n), np.arange(2 * n) - 2 * n) * h
    r2 = sum(a**2 for a in np.ix_(*([disp] * grid.dim)))
    with np.errstate(divide="ignore"):
        k = r2 ** (-power / 2)
    R = (3.0 / (4.0 * np.pi)) ** (1.0 / 3.0) * h
    ball = {1: 2.0 * np.pi * R**2, 2: 4.0 * np.pi * R}[power]
    k[(0,) * grid.dim] = ball / h**3
    return k


def _linear_convolve(values: np.ndarray, kernel: np.ndarray, h3: float) -> np.ndarray:
    n = values.shape[0]
    pad = np.zeros(kernel.shape)
    pad[(slice(0, n),) * values.ndim] = values
    out = sfft.irfftn(sfft.rfftn(pad) * sfft.rfftn(kernel), s=kernel.shape)
    return out[(slice(0, n),) * values.ndim] * h3


def check_rollnik(spec: PotentialSpec, grid: Grid) -> tuple[float, float, bool]:
    """Quadrature of the two Rollnik-type smallness integrals in d=3.

    Returns ``(int int |V(x)||V(y)|/|x-y|^2, sup_x int |V(y)|/|x-y|, admissible)``
    with admissibility meaning both are below ``(4 pi)^2`` and ``4 pi``.
    V is taken to vanish outside the box (no periodic images).
    """
    if grid.dim != 3:
        raise ValueError(f"Rollnik conditions are evaluated in d=3, grid has d={grid.dim}")
    v = np.abs(sample_potential(spec, grid).values.real)
    h3 = grid.cell_volume
    if not np.any(v):
        return 0.0, 0.0, True
    inv_r2 = _linear_convolve(v, _padded_kernel(grid, 2), h3)
    inv_r = _linear_convolve(v, _padded_kernel(grid, 1), h3)
    rollnik = float(np.sum(v * inv_r2) * h3)
    kato = float(np.max(inv_r))
    return rollnik, kato, bool(rollnik < ROLLNIK_THRESHOLD and kato < KATO_THRESHOLD)


def tight_decay_constant(spec: InteractionSpec, r_max: float | None = None, samples: int = 10_000) -> float:
    """Smallest C_w with ``|w(r)| <= C_w r^-gamma`` on sampled ``r >= 1``."""
    r = np.linspace(1.0, r_max or max(10.0 * spec.width, 1.0), samples)
    return float(np.max(np.abs(spec.profile(r)) * r**spec.decay_exponent))


def check_decay_condition(
    spec: InteractionSpec,
    samples: int = 1000,
    profile: Callable[[np.ndarray], np.ndarray] | None = None,
) -> bool:
    """Sample ``|w(z)| <= C_w |z|^-gamma`` on radii in ``[1, 10 * width]``.

    ``profile`` overrides the family's radial profile (for externally supplied
    kernels).
    """
    if samples < 100:
        raise ValueError("at least 100 samples are required")
    r = np.linspace(1.0, max(10.0 * spec.width, 1.0), samples)
    w = np.abs((profile or spec.profile)(r))
    if np.isinf(spec.decay_exponent):
        return bool(np.all(w == 0.0))
    return bool(np.all(w <= spec.decay_constant * r ** (-spec.decay_exponent)))
