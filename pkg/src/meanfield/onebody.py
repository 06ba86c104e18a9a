"""Split-step Fourier evolution of the one-body Hartree / NLS equations.

Solves ``i d_t u = (-Laplacian + V) u + lam * F[u] u`` where ``F[u]`` is
``w * |u|^2`` (Hartree, possibly with an N-scaled kernel) or ``a |u|^2``
(cubic NLS).  The kinetic symbol on the grid is ``4 pi^2 |xi|^2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import fft as sfft

from .errors import BootstrapFailure, NumericalFailure
from .grid import ComplexField, Grid, norm
from .io import write_csv
from .potentials import InteractionSpec, scaled_interaction

__all__ = [
    "Hartree",
    "Cubic",
    "scaled_hartree",
    "OneBodyProblem",
    "Observables",
    "WaveTrajectory",
    "SplitStepper",
    "BoundaryMassWarning",
    "step",
    "evolve",
    "energy",
    "measure_decay",
    "measure_time_derivative_decay",
    "linear_decay_probe",
    "bootstrap_root",
    "M_functional",
]

BLOWUP_FACTOR = 1e6
BOUNDARY_MASS_THRESHOLD = 1e-6
OBSERVABLE_COLUMNS = ("t", "l2", "linf", "energy", "boundary_mass")


class BoundaryMassWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Hartree:
    """Convolution nonlinearity ``(w * |u|^2) u``."""

    w: ComplexField


@dataclass(frozen=True)
class Cubic:
    """Local nonlinearity ``a |u|^2 u``."""

    a: float


Nonlinearity = Union[Hartree, Cubic, None]


def scaled_hartree(spec: InteractionSpec, N: int, beta: float, grid: Grid) -> Hartree:
    """Hartree nonlinearity with the N-dependent kernel ``w_N``."""
    return Hartree(scaled_interaction(spec, N, beta, grid))


@dataclass(frozen=True)
class OneBodyProblem:
    grid: Grid
    u0: ComplexField
    V: ComplexField | None = None
    nonlinearity: Nonlinearity = None
    lam: float = 0.0

    def __post_init__(self):
        if self.u0.grid != self.grid:
            raise ValueError("initial state lives on a different grid")
        if abs(norm(self.u0) - 1.0) > 1e-10:
            raise ValueError(f"initial state must have unit L2 norm, got {norm(self.u0)!r}")
        if self.V is not None:
            if self.V.grid != self.grid:
                raise ValueError("potential lives on a different grid")
            if np.max(np.abs(self.V.values.imag)) > 1e-14:
                raise ValueError("external potential must be real-valued")
        if isinstance(self.nonlinearity, Hartree) and self.nonlinearity.w.grid != self.grid:
            raise ValueError("interaction kernel lives on a different grid")

    @property
    def potential(self) -> np.ndarray:
        if self.V is None:
            return np.zeros(self.grid.shape)
        return self.V.values.real

    def interacting(self) -> bool:
        return self.nonlinearity is not None and self.lam != 0.0


class SplitStepper:
    """Strang splitting ``K(dt/2) P(dt) K(dt/2)`` on raw arrays.

    The pointwise phase uses the density after the first kinetic half-step.
    """

    def __init__(self, problem: OneBodyProblem, dt: float):
        if dt == 0:
            raise ValueError("dt must be nonzero")
        g = problem.grid
        self.problem = problem
        self.dt = dt
        self.kinetic_half = np.exp(-0.5j * dt * 4.0 * np.pi**2 * g.xi_squared_fft)
        self.V = problem.potential
        self.lam = problem.lam
        nl = problem.nonlinearity if problem.interacting() else None
        self.nonlinearity = nl
        if isinstance(nl, Hartree):
            self.w_hat = sfft.fftn(sfft.ifftshift(nl.w.values)) * g.cell_volume
        self.linf_limit = BLOWUP_FACTOR * float(np.max(np.abs(problem.u0.values)))

    def mean_field(self, u: np.ndarray) -> np.ndarray:
        rho = np.abs(u) ** 2
        if isinstance(self.nonlinearity, Hartree):
            return sfft.ifftn(sfft.fftn(rho) * self.w_hat).real
        if isinstance(self.nonlinearity, Cubic):
            return self.nonlinearity.a * rho
        return np.zeros_like(rho)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = sfft.ifftn(self.kinetic_half * sfft.fftn(u))
        pot = self.V
        if self.nonlinearity is not None:
            pot = pot + self.lam * self.mean_field(u)
        u = u * np.exp(-1j * self.dt * pot)
        u = sfft.ifftn(self.kinetic_half * sfft.fftn(u))
        linf = np.max(np.abs(u))
        if not np.isfinite(linf) or linf > self.linf_limit:
            raise NumericalFailure(f"blow-up guard: Linf={linf:.3e} exceeds {self.linf_limit:.3e}")
        return u


def step(problem: OneBodyProblem, state: ComplexField, dt: float) -> ComplexField:
    """One Strang step of size ``dt`` (negative ``dt`` runs backwards)."""
    if state.grid != problem.grid:
        raise ValueError("state lives on a different grid")
    return state.with_values(SplitStepper(problem, dt)(state.values))


def _energy_values(stepper: SplitStepper, u: np.ndarray) -> float:
    g = stepper.problem.grid
    h = g.cell_volume
    c = sfft.fftn(u) * h
    kinetic = float(np.sum(4.0 * np.pi**2 * g.xi_squared_fft * np.abs(c) ** 2) / g.volume)
    rho = np.abs(u) ** 2
    out = kinetic + float(np.sum(stepper.V * rho) * h)
    if stepper.nonlinearity is not None:
        out += 0.5 * stepper.lam * float(np.sum(stepper.mean_field(u) * rho) * h)
    return out


def energy(problem: OneBodyProblem, state: ComplexField) -> float:
    """``int |grad u|^2 + int V|u|^2 + (lam/2) int F[u] |u|^2``."""
    return _energy_values(SplitStepper(problem, 1.0), state.values)


@dataclass
class Observables:
    t: np.ndarray
    l2: np.ndarray
    linf: np.ndarray
    energy: np.ndarray
    boundary_mass: np.ndarray

    def rows(self):
        return zip(*(getattr(self, c) for c in OBSERVABLE_COLUMNS))

    def to_csv(self, path):
        """Write ``t,l2,linf,energy,boundary_mass`` with 17 significant digits."""
        return write_csv(path, OBSERVABLE_COLUMNS, self.rows())


@dataclass
class WaveTrajectory:
    """Snapshots at selected times plus per-step observables."""

    times: list[float]
    snapshots: list[ComplexField]
    observables: Observables | None = None
    dt: float | None = None

    def __post_init__(self):
        if len(self.times) != len(self.snapshots):
            raise ValueError("times and snapshots differ in length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("snapshot times must be strictly increasing")

    @property
    def grid(self) -> Grid:
        return self.snapshots[0].grid

    def snapshot_at(self, t: float, tol: float = 1e-9) -> ComplexField:
        for s, field_ in zip(self.times, self.snapshots):
            if abs(s - t) <= tol:
                return field_
        raise KeyError(f"no snapshot at t={t}")


def evolve(
    problem: OneBodyProblem,
    t_max: float,
    dt: float,
    snapshot_times: Sequence[float] | None = None,
    boundary_threshold: float = BOUNDARY_MASS_THRESHOLD,
) -> WaveTrajectory:
    """Evolve ``u0`` to ``t_max`` recording observables at every step.

    ``dt`` is shrunk, if needed, so that an integer number of steps lands on
    ``t_max``.  Snapshots are taken at the steps nearest the requested times
    (default: ``0`` and ``t_max``).
    """
    if t_max < 0:
        raise ValueError("t_max must be nonnegative")
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = problem.u0.values
    if t_max == 0:
        stepper = SplitStepper(problem, dt)
        obs = _observe(stepper, [0.0], [u])
        return WaveTrajectory([0.0], [problem.u0], obs, dt)
    if dt > t_max:
        raise ValueError("dt must not exceed t_max")
    n_steps = math.ceil(t_max / dt - 1e-9)
    dt = t_max / n_steps
    if snapshot_times is None:
        snapshot_times = (0.0, t_max)
    wanted = sorted({min(n_steps, max(0, round(s / dt))) for s in snapshot_times})
    wanted_set = set(wanted)

    stepper = SplitStepper(problem, dt)
    g = problem.grid
    h = g.cell_volume
    mask = g.boundary_mask
    rec = {c: np.empty(n_steps + 1) for c in OBSERVABLE_COLUMNS}
    times, snaps = [], []
    warned = False
    for k in range(n_steps + 1):
        if k:
            u = stepper(u)
        rho = np.abs(u) ** 2
        rec["t"][k] = k * dt
        rec["l2"][k] = math.sqrt(float(np.sum(rho)) * h)
        rec["linf"][k] = math.sqrt(float(np.max(rho)))
        rec["energy"][k] = _energy_values(stepper, u)
        bm = float(np.sum(rho[mask])) * h
        rec["boundary_mass"][k] = bm
        if bm > boundary_threshold and not warned:
            warnings.warn(
                f"boundary mass {bm:.2e} exceeds {boundary_threshold:.0e} at t={k * dt:.4g}",
                BoundaryMassWarning,
                stacklevel=2,
            )
            warned = True
        if k in wanted_set:
            times.append(k * dt)
            snaps.append(ComplexField(g, u))
    return WaveTrajectory(times, snaps, Observables(**rec), dt)


def _observe(stepper: SplitStepper, ts, us) -> Observables:
    g = stepper.problem.grid
    rec = {c: [] for c in OBSERVABLE_COLUMNS}
    for t, u in zip(ts, us):
        f = ComplexField(g, u)
        rec["t"].append(t)
        rec["l2"].append(norm(f))
        rec["linf"].append(norm(f, "Linf"))
        rec["energy"].append(_energy_values(stepper, u))
        rec["boundary_mass"].append(
            float(np.sum(np.abs(u[g.boundary_mask]) ** 2)) * g.cell_volume
        )
    return Observables(**{k: np.asarray(v, dtype=float) for k, v in rec.items()})


def _linf_series(trajectory: WaveTrajectory) -> tuple[np.ndarray, np.ndarray]:
    if trajectory.observables is not None:
        return trajectory.observables.t, trajectory.observables.linf
    t = np.asarray(trajectory.times, dtype=float)
    return t, np.array([norm(s, "Linf") for s in trajectory.snapshots])


def measure_decay(trajectory: WaveTrajectory, exponent: float):
    """Weighted series ``(1+t)^exponent * ||u_t||_inf``.

    Returns ``(series, running_sup)`` where ``series`` is a list of
    ``(t, value)`` pairs and ``running_sup`` the running maximum of the values.
    """
    if exponent < 0:
        raise ValueError("exponent must be nonnegative")
    t, linf = _linf_series(trajectory)
    vals = (1.0 + t) ** exponent * linf
    return list(zip(t.tolist(), vals.tolist())), np.maximum.accumulate(vals).tolist()


def measure_time_derivative_decay(trajectory: WaveTrajectory, exponent: float):
    """Central-difference ``(1+t)^exponent * ||d_t u_t||_inf`` at interior snapshots."""
    times = np.asarray(trajectory.times, dtype=float)
    if len(times) < 3:
        raise ValueError("at least 3 snapshots are required")
    gaps = np.diff(times)
    delta = gaps[0]
    if np.max(np.abs(gaps - delta)) > 1e-9 * max(1.0, delta):
        raise ValueError("snapshots must be uniformly spaced")
    out = []
    for j in range(1, len(times) - 1):
        du = (trajectory.snapshots[j + 1].values - trajectory.snapshots[j - 1].values) / (2 * delta)
        out.append((float(times[j]), float((1.0 + times[j]) ** exponent * np.max(np.abs(du)))))
    return out


def linear_decay_probe(
    V: ComplexField | None,
    f: ComplexField,
    t_list: Sequence[float],
    dt: float = 1e-2,
):
    """Ratios ``||e^{-it(-Lap+V)} f||_inf * t^(d/2) / ||f||_1``.

    Returns ``(pairs, C_V)`` with ``C_V`` the largest ratio.  With ``V`` zero
    the free propagator is applied exactly in Fourier space.
    """
    ts = sorted(float(t) for t in t_list)
    if not ts or ts[0] <= 0:
        raise ValueError("t_list must hold positive times")
    g = f.grid
    d = g.dim
    l1 = norm(f, "L1")
    u0 = f.with_values(f.values / norm(f))
    scale = norm(f)
    pairs = []
    if V is None or not np.any(V.values):
        c = sfft.fftn(u0.values)
        for t in ts:
            u = sfft.ifftn(np.exp(-1j * t * 4.0 * np.pi**2 * g.xi_squared_fft) * c)
            pairs.append((t, scale * float(np.max(np.abs(u))) * t ** (d / 2) / l1))
    else:
        problem = OneBodyProblem(g, u0, V)
        u, now = u0.values, 0.0
        steppers: dict[float, SplitStepper] = {}
        for t in ts:
            gap = t - now
            if gap > 0:
                n = math.ceil(gap / dt - 1e-9)
                h = gap / n
                key = round(h, 15)
                if key not in steppers:
                    steppers[key] = SplitStepper(problem, h)
                for _ in range(n):
                    u = steppers[key](u)
                now = t
            pairs.append((t, scale * float(np.max(np.abs(u))) * t ** (d / 2) / l1))
    return pairs, max(r for _, r in pairs)


def bootstrap_root(eps: float, C: float, tol: float = 1e-12) -> float:
    """Smallest nonnegative root of ``eps + C x^3 - x``, by bisection.

    Raises :class:`BootstrapFailure` when ``27 C eps^2 >= 4``, where the cubic
    has no root before its minimum at ``x = 1/sqrt(3C)``.
    """
    if eps < 0 or not C > 0:
        raise ValueError("need eps >= 0 and C > 0")
    if 27.0 * C * eps**2 >= 4.0:
        raise BootstrapFailure(
            f"27*C*eps^2 = {27.0 * C * eps**2:.6g} >= 4: no bounded bootstrap"
        )
    if eps == 0:
        return 0.0

    def f(x):
        return eps + C * x**3 - x

    lo, hi = 0.0, 1.0 / math.sqrt(3.0 * C)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def M_functional(trajectory: WaveTrajectory, k: int | None = None, T: float | None = None) -> float:
    """``sup (1+t)^(d/2) ||u_t||_inf + sup ||D^k u_t||_2 + ||u_0||_2`` over ``t <= T``.

    ``D^k`` multiplies Fourier coefficients by ``(2 pi |xi|)^k``; ``k`` defaults
    to the smallest even integer above ``d/2``.
    """
    g = trajectory.grid
    d = g.dim
    if k is None:
        k = 2 * (d // 4 + 1)
    T = trajectory.times[-1] if T is None else T
    t, linf = _linf_series(trajectory)
    keep = t <= T + 1e-12
    weighted = float(np.max((1.0 + t[keep]) ** (d / 2) * linf[keep]))
    symbol = (2.0 * np.pi * np.sqrt(g.xi_squared_fft)) ** k
    sob = 0.0
    for s, snap in zip(trajectory.times, trajectory.snapshots):
        if s > T + 1e-12:
            break
        c = sfft.fftn(snap.values) * g.cell_volume
        sob = max(sob, math.sqrt(float(np.sum(np.abs(symbol * c) ** 2)) / g.volume))
    return weighted + sob + norm(trajectory.snapshots[0])
