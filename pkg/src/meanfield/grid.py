"""Periodic box discretization, spectral transforms, convolution and norms.

The box is ``[-L/2, L/2)^d`` sampled with ``n`` points per axis.  Transforms
use the convention ``f^(xi) = int f(x) exp(-2 pi i x.xi) dx`` and carry the
quadrature weight ``h^d`` so that coefficients approximate the continuum
transform independently of the resolution.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Literal

import numpy as np
from scipy import fft as sfft

__all__ = [
    "Grid",
    "ComplexField",
    "make_grid",
    "field_from_function",
    "transform_forward",
    "transform_inverse",
    "convolve",
    "norm",
    "inner",
    "boundary_mass",
]

NormKind = Literal["L1", "L2", "Linf", "H2"]

# Fraction of the box next to each face that counts as the boundary shell.
BOUNDARY_SHELL = 0.1


@dataclass(frozen=True)
class Grid:
    dim: int
    points_per_axis: int
    box_length: float

    @property
    def spacing(self) -> float:
        return self.box_length / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def cardinality(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def volume(self) -> float:
        return self.box_length**self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        """Centered coordinates ``-L/2 + j h`` along one axis."""
        n = self.points_per_axis
        return (np.arange(n) - n // 2) * self.spacing

    @cached_property
    def frequency_axis(self) -> np.ndarray:
        """Centered frequencies ``k / L`` for ``k`` in ``[-n/2, n/2)``."""
        n = self.points_per_axis
        return (np.arange(n) - n // 2) / self.box_length

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Open (broadcastable) coordinate arrays, one per axis."""
        return tuple(np.ix_(*([self.axis] * self.dim)))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(x**2 for x in self.mesh()))

    @cached_property
    def frequency_lattice(self) -> np.ndarray:
        """All lattice frequencies as an array of shape ``(n**d, d)``."""
        axes = np.meshgrid(*([self.frequency_axis] * self.dim), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=-1)

    @cached_property
    def xi_squared_fft(self) -> np.ndarray:
        """``|xi|^2`` on the frequency lattice in unshifted FFT ordering."""
        f = sfft.fftfreq(self.points_per_axis, d=self.spacing)
        out = np.zeros(self.shape)
        for ax in range(self.dim):
            sl = [np.newaxis] * self.dim
            sl[ax] = slice(None)
            out = out + (f**2)[tuple(sl)]
        return out

    @cached_property
    def xi_squared(self) -> np.ndarray:
        """``|xi|^2`` in centered ordering, matching :func:`transform_forward`."""
        return sfft.fftshift(self.xi_squared_fft)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        edge = (0.5 - BOUNDARY_SHELL) * self.box_length
        mask = np.zeros(self.shape, dtype=bool)
        for x in self.mesh():
            mask = mask | (np.abs(x) >= edge)
        return mask


def make_grid(dim: int, points_per_axis: int, box_length: float) -> Grid:
    """Build a periodic grid, validating the size constraints."""
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    n = int(points_per_axis)
    if n != points_per_axis or n < 8 or n & (n - 1):
        raise ValueError(f"points_per_axis must be a power of two >= 8, got {points_per_axis}")
    if not box_length > 0 or not np.isfinite(box_length):
        raise ValueError(f"box_length must be positive, got {box_length}")
    return Grid(dim, n, float(box_length))


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex samples of a function on a grid (array shape ``grid.shape``)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.complex128)
        if v.size != self.grid.cardinality:
            raise ValueError(f"expected {self.grid.cardinality} values, got {v.size}")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains NaN or Inf")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def with_values(self, values: np.ndarray) -> "ComplexField":
        return ComplexField(self.grid, values)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2


def field_from_function(grid: Grid, fn: Callable[..., np.ndarray]) -> ComplexField:
    """Sample ``fn(x1, ..., xd)`` on the grid."""
    vals = np.broadcast_to(fn(*grid.mesh()), grid.shape)
    return ComplexField(grid, vals)


def _check_same_grid(f: ComplexField, g: ComplexField) -> None:
    if f.grid != g.grid:
        raise ValueError(f"grid mismatch: {f.grid} vs {g.grid}")


def transform_forward(f: ComplexField) -> ComplexField:
    """Continuum-scaled Fourier coefficients in centered frequency order."""
    g = f.grid
    c = sfft.fftshift(sfft.fftn(sfft.ifftshift(f.values)))
    return ComplexField(g, c * g.cell_volume)


def transform_inverse(c: ComplexField) -> ComplexField:
    g = c.grid
    v = sfft.fftshift(sfft.ifftn(sfft.ifftshift(c.values)))
    return ComplexField(g, v / g.cell_volume)


def convolve(f: ComplexField, g: ComplexField) -> ComplexField:
    """Periodic convolution ``(f*g)(x) = h^d sum_y f(y) g(x - y)``."""
    _check_same_grid(f, g)
    spec = sfft.fftn(f.values) * sfft.fftn(sfft.ifftshift(g.values))
    return f.with_values(sfft.ifftn(spec) * f.grid.cell_volume)


def norm(f: ComplexField, kind: NormKind = "L2") -> float:
    g = f.grid
    if kind == "L1":
        return float(np.sum(np.abs(f.values)) * g.cell_volume)
    if kind == "L2":
        return float(np.sqrt(np.sum(f.density) * g.cell_volume))
    if kind == "Linf":
        return float(np.max(np.abs(f.values)))
    if kind == "H2":
        c = transform_forward(f).values
        weighted = (1.0 + 4.0 * np.pi**2 * g.xi_squared) * c
        return float(np.sqrt(np.sum(np.abs(weighted) ** 2) / g.volume))
    raise ValueError(f"unknown norm kind {kind!r}")


def inner(f: ComplexField, g: ComplexField) -> complex:
    """``<f, g> = int conj(f) g``."""
    _check_same_grid(f, g)
    return complex(np.vdot(f.values, g.values) * f.grid.cell_volume)


def boundary_mass(f: ComplexField) -> float:
    """Probability within the outer 10% shell of the box."""
    g = f.grid
    return float(np.sum(f.density[g.boundary_mask]) * g.cell_volume)
