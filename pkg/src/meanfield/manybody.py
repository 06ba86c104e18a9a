"""Exact propagation of symmetric N-body states on tensor-product grids.

The N-body wave function is stored as an array with ``d*N`` axes, the
block of ``d`` axes starting at ``j*d`` belonging to particle ``j``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import fft as sfft

from .errors import NumericalFailure, ResourceRejection
from .grid import ComplexField, Grid, norm
from .onebody import BLOWUP_FACTOR
from .potentials import InteractionSpec, scaled_interaction

__all__ = [
    "MAX_AMPLITUDES",
    "ManyBodyState",
    "DensityMatrix",
    "ManyBodyRecord",
    "product_state",
    "evolve_manybody",
    "reduced_density",
    "trace_distance",
    "condensate_fraction",
    "symmetry_defect",
    "manybody_energy",
    "projector",
]

MAX_AMPLITUDES = 2**27


@dataclass(frozen=True, eq=False)
class ManyBodyState:
    N: int
    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        shape = self.grid.shape * self.N
        if self.values.shape != shape:
            raise ValueError(f"expected shape {shape}, got {self.values.shape}")

    @property
    def mass(self) -> float:
        h = self.grid.cell_volume**self.N
        return math.sqrt(float(np.sum(np.abs(self.values) ** 2)) * h)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """One-particle density matrix with entries ``gamma(x; y) * h^d``.

    With this weighting the trace is the plain matrix trace.
    """

    entries: np.ndarray
    grid: Grid

    @property
    def dimension(self) -> int:
        return self.entries.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def check(self, herm_tol: float = 1e-12, trace_tol: float = 1e-9, eig_tol: float = 1e-10) -> None:
        e = self.entries
        if np.max(np.abs(e - e.conj().T)) > herm_tol * max(1.0, np.max(np.abs(e))):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(e).real - 1.0) > trace_tol:
            raise ValueError(f"density matrix trace {np.trace(e).real!r} differs from 1")
        if self.eigenvalues().min() < -eig_tol:
            raise ValueError("density matrix has negative eigenvalues")


@dataclass
class ManyBodyRecord:
    t: float
    mass: float
    energy: float
    symmetry_defect: float
    gamma: DensityMatrix | None = None


def _budget_suggestion(n: int, d: int, N: int, budget: int) -> str:
    best_N = max((m for m in range(1, N + 1) if n ** (d * m) <= budget), default=0)
    best_n = max((2**p for p in range(3, int(math.log2(n)) + 1) if (2**p) ** (d * N) <= budget), default=0)
    parts = []
    if best_N:
        parts.append(f"N <= {best_N} at n={n}")
    if best_n:
        parts.append(f"n <= {best_n} at N={N}")
    return " or ".join(parts) or "reduce both n and N"


def check_budget(grid: Grid, N: int, budget: int = MAX_AMPLITUDES) -> None:
    amplitudes = grid.cardinality**N
    if amplitudes > budget:
        raise ResourceRejection(
            f"{amplitudes} amplitudes (n={grid.points_per_axis}, d={grid.dim}, N={N}) exceed the "
            f"budget of {budget}; try {_budget_suggestion(grid.points_per_axis, grid.dim, N, budget)}"
        )


def product_state(u0: ComplexField, N: int, budget: int = MAX_AMPLITUDES) -> ManyBodyState:
    """``psi(x_1, ..., x_N) = prod_j u0(x_j)``."""
    if N < 1:
        raise ValueError("N must be positive")
    if abs(norm(u0) - 1.0) > 1e-10:
        raise ValueError("u0 must have unit L2 norm")
    check_budget(u0.grid, N, budget)
    psi = u0.values
    for _ in range(N - 1):
        psi = np.multiply.outer(psi, u0.values)
    return ManyBodyState(N, u0.grid, np.array(psi, dtype=np.complex128))


def _particle_axes(d: int, j: int) -> list[int]:
    return list(range(j * d, (j + 1) * d))


def _place(block: np.ndarray, d: int, N: int, particles: Sequence[int]) -> np.ndarray:
    """Reshape ``block`` (axes of the listed particles, ascending) for broadcasting."""
    shape = [1] * (d * N)
    for j in particles:
        for ax in _particle_axes(d, j):
            shape[ax] = block.shape[0]
    return block.reshape(shape)


def pair_kernel(w: ComplexField) -> np.ndarray:
    """``W[a, b] = w(x_a - x_b)`` with periodic displacements, shape ``grid.shape * 2``."""
    g = w.grid
    w0 = sfft.ifftshift(w.values.real)
    n, d = g.points_per_axis, g.dim
    idx = np.arange(n)
    diff = (idx[:, None] - idx[None, :]) % n
    index = []
    for ax in range(d):
        shape = [1] * (2 * d)
        shape[ax] = n
        shape[d + ax] = n
        index.append(diff.reshape(shape))
    return w0[tuple(index)]


def total_potential(grid: Grid, N: int, V: ComplexField | None, w_N: ComplexField | None, lam: float) -> np.ndarray:
    """``sum_j V(x_j) + (lam/N) sum_{i<j} w_N(x_i - x_j)`` on the N-body grid."""
    d = grid.dim
    out = np.zeros(grid.shape * N)
    if V is not None:
        v = V.values.real
        for j in range(N):
            out += _place(v, d, N, [j])
    if w_N is not None and lam != 0.0 and N > 1:
        W = (lam / N) * pair_kernel(w_N)
        for i, j in itertools.combinations(range(N), 2):
            out += _place(W, d, N, [i, j])
    return out


def _kinetic_symbol(grid: Grid, N: int) -> np.ndarray:
    d = grid.dim
    xi2 = 4.0 * np.pi**2 * grid.xi_squared_fft
    out = np.zeros(grid.shape * N)
    for j in range(N):
        out = out + _place(xi2, d, N, [j])
    return out


def _energy(psi: np.ndarray, grid: Grid, N: int, kin: np.ndarray, pot: np.ndarray) -> float:
    h = grid.cell_volume**N
    c = sfft.fftn(psi) * h
    kinetic = float(np.sum(kin * np.abs(c) ** 2)) / grid.volume**N
    return kinetic + float(np.sum(pot * np.abs(psi) ** 2)) * h


def manybody_energy(
    state: ManyBodyState,
    V: ComplexField | None,
    w: ComplexField | InteractionSpec | None,
    lam: float,
    beta: float = 0.0,
) -> float:
    """``<psi, H_N psi>`` by direct quadrature."""
    g, N = state.grid, state.N
    w_N = _resolve_interaction(w, N, beta, g)
    return _energy(state.values, g, N, _kinetic_symbol(g, N), total_potential(g, N, V, w_N, lam))


def symmetry_defect(state: ManyBodyState | np.ndarray, N: int | None = None, d: int | None = None) -> float:
    """Largest ``|psi - P_ij psi|`` over all particle transpositions."""
    if isinstance(state, ManyBodyState):
        psi, N, d = state.values, state.N, state.grid.dim
    else:
        psi = state
    worst = 0.0
    for i, j in itertools.combinations(range(N), 2):
        perm = list(range(d * N))
        ai, aj = _particle_axes(d, i), _particle_axes(d, j)
        for a, b in zip(ai, aj):
            perm[a], perm[b] = b, a
        worst = max(worst, float(np.max(np.abs(psi - psi.transpose(perm)))))
    return worst


def _resolve_interaction(w, N, beta, grid):
    if w is None:
        return None
    if isinstance(w, InteractionSpec):
        return scaled_interaction(w, N, beta, grid)
    if beta != 0.0:
        raise ValueError("pass an InteractionSpec to apply the N^beta scaling; a sampled kernel is used as-is")
    return w


def evolve_manybody(
    state: ManyBodyState,
    V: ComplexField | None,
    w: ComplexField | InteractionSpec | None,
    lam: float,
    beta: float,
    t_max: float,
    dt: float,
    record_times: Sequence[float] | None = None,
    keep_density: bool = True,
) -> tuple[ManyBodyState, list[ManyBodyRecord]]:
    """Strang-split propagation under ``H_N``.

    ``w`` is either an :class:`InteractionSpec` (scaled to ``w_N`` with
    ``beta``) or an already sampled kernel.  Records (mass, energy, symmetry
    defect, and optionally the reduced density) are taken at the steps
    nearest ``record_times``; the default is every step.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t_max < 0:
        raise ValueError("t_max must be nonnegative")
    g, N = state.grid, state.N
    w_N = _resolve_interaction(w, N, beta, g)
    n_steps = math.ceil(t_max / dt - 1e-9) if t_max > 0 else 0
    dt = t_max / n_steps if n_steps else dt
    if record_times is None:
        wanted = set(range(n_steps + 1))
    else:
        wanted = {min(n_steps, max(0, round(s / dt))) for s in record_times} if n_steps else {0}

    kin = _kinetic_symbol(g, N)
    pot = total_potential(g, N, V, w_N, lam)
    half = np.exp(-0.5j * dt * kin)
    phase = np.exp(-1j * dt * pot)
    limit = BLOWUP_FACTOR * float(np.max(np.abs(state.values)))

    def record(psi, t):
        s = ManyBodyState(N, g, psi, state.time + t)
        return ManyBodyRecord(
            t=state.time + t,
            mass=s.mass,
            energy=_energy(psi, g, N, kin, pot),
            symmetry_defect=symmetry_defect(psi, N, g.dim),
            gamma=reduced_density(s) if keep_density else None,
        )

    psi = state.values
    records = [record(psi, 0.0)] if 0 in wanted else []
    c = sfft.fftn(psi)
    for k in range(1, n_steps + 1):
        c *= half
        psi = sfft.ifftn(c)
        psi *= phase
        c = sfft.fftn(psi)
        c *= half
        if k in wanted or k == n_steps:
            psi = sfft.ifftn(c)
            linf = float(np.max(np.abs(psi)))
            if not np.isfinite(linf) or linf > limit:
                raise NumericalFailure(f"blow-up guard tripped at t={k * dt:.4g}")
            if k in wanted:
                records.append(record(psi, k * dt))
    if n_steps:
        psi = sfft.ifftn(c)
    return ManyBodyState(N, g, psi, state.time + n_steps * dt), records


def reduced_density(state: ManyBodyState) -> DensityMatrix:
    """Partial trace over particles ``2..N``."""
    g, N = state.grid, state.N
    M = state.values.reshape(g.cardinality, -1)
    gamma = (M @ M.conj().T) * g.cell_volume**N
    gamma = 0.5 * (gamma + gamma.conj().T)
    return DensityMatrix(gamma, g)


def projector(phi: ComplexField) -> np.ndarray:
    """``|phi><phi|`` in the weighted matrix convention of :class:`DensityMatrix`."""
    v = phi.values.reshape(-1)
    return np.outer(v, v.conj()) * phi.grid.cell_volume


def trace_distance(gamma: DensityMatrix, phi: ComplexField) -> float:
    """``Tr |gamma - |phi><phi||`` via eigendecomposition."""
    if phi.grid != gamma.grid:
        raise ValueError("phi lives on a different grid")
    ev = np.linalg.eigvalsh(gamma.entries - projector(phi))
    return float(min(2.0, np.sum(np.abs(ev))))


def condensate_fraction(gamma: DensityMatrix) -> float:
    """Largest eigenvalue of the one-particle density matrix."""
    return float(np.clip(gamma.eigenvalues()[-1], 0.0, 1.0))
