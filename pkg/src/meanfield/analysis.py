"""Rate formulas, power-law fits, Groenwall bounds and uniformity checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .grid import norm
from .onebody import WaveTrajectory

__all__ = [
    "RateFit",
    "GroenwallCertificate",
    "theorem_rate",
    "alternative_rate",
    "compare_one_body",
    "fit_rate",
    "groenwall_bound",
    "uniformity_check",
]

TimeFunction = Union[Callable[[np.ndarray], np.ndarray], Sequence[float], np.ndarray]


@dataclass
class RateFit:
    """Least-squares fit of ``log(error) = intercept + exponent * log(N)``."""

    exponent: float
    intercept: float
    residual_rms: float
    sample_points: list[tuple[float, float]] = field(default_factory=list)

    def predict(self, N) -> np.ndarray:
        return np.exp(self.intercept) * np.asarray(N, dtype=float) ** self.exponent

    def to_json(self, beta: float | None = None, predicted_exponent: float | None = None, **extra) -> dict:
        out = {
            "beta": beta,
            "predicted_exponent": predicted_exponent,
            "fitted_exponent": self.exponent,
            "residual_rms": self.residual_rms,
            "samples": [[n, e] for n, e in self.sample_points],
        }
        out.update(extra)
        return out


@dataclass
class GroenwallCertificate:
    time_nodes: np.ndarray
    alpha_values: np.ndarray
    eps_values: np.ndarray
    bound_values: np.ndarray
    phi0: float

    def verify(self, rtol: float = 1e-9) -> bool:
        """Recompute the bound from the stored node values and compare."""
        again = _groenwall_values(self.time_nodes, self.alpha_values, self.eps_values, self.phi0)
        scale = np.maximum(1.0, np.abs(again))
        return bool(np.all(self.bound_values >= 0) and np.all(np.abs(again - self.bound_values) <= rtol * scale))


def theorem_rate(beta: float) -> float:
    """Exponent of the trace-norm convergence rate ``N^{-rate}``.

    ``1`` in the mean-field case ``beta = 0``, ``min(beta, (1 - 3 beta)/2)``
    for ``0 < beta < 1/3``.  The jump at ``beta = 0`` is intentional.
    """
    if not 0.0 <= beta < 1.0 / 3.0:
        raise ValueError(f"beta must satisfy 0 <= beta < 1/3, got {beta}")
    if beta == 0.0:
        return 1.0
    return min(beta, (1.0 - 3.0 * beta) / 2.0)


def alternative_rate(beta: float, gamma: float) -> float:
    """``alpha/2`` with ``alpha = beta (gamma - 3)/(gamma - 2)``; ``gamma = inf`` allowed."""
    if not gamma > 3:
        raise ValueError(f"gamma must exceed 3, got {gamma}")
    if math.isinf(gamma):
        return beta / 2.0
    return beta * (gamma - 3.0) / (2.0 * (gamma - 2.0))


def compare_one_body(u_traj: WaveTrajectory, phi_traj: WaveTrajectory, times: Sequence[float] | None = None):
    """``||u_t - phi_t||_2`` at shared snapshot times.

    Returns ``(pairs, sup)``; ``times`` defaults to all snapshot times.
    """
    if u_traj.grid != phi_traj.grid:
        raise ValueError("trajectories live on different grids")
    if times is None:
        if len(u_traj.times) != len(phi_traj.times) or not np.allclose(u_traj.times, phi_traj.times, rtol=0, atol=1e-9):
            raise ValueError("snapshot times differ between trajectories")
        times = u_traj.times
    pairs = []
    for t in times:
        try:
            a, b = u_traj.snapshot_at(t), phi_traj.snapshot_at(t)
        except KeyError as exc:
            raise ValueError(f"snapshot-time mismatch at t={t}") from exc
        pairs.append((float(t), norm(a.with_values(a.values - b.values))))
    return pairs, max(e for _, e in pairs)


def fit_rate(samples: Sequence[tuple[float, float]]) -> RateFit:
    pts = [(float(n), float(e)) for n, e in samples]
    if any(e <= 0 or not math.isfinite(e) for _, e in pts):
        raise ValueError("errors must be positive and finite for a log-log fit")
    if any(n <= 0 for n, _ in pts):
        raise ValueError("N values must be positive")
    if len({n for n, _ in pts}) < 3:
        raise ValueError("need at least 3 distinct N values")
    x = np.log([n for n, _ in pts])
    y = np.log([e for _, e in pts])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    return RateFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))), pts)


def _node_values(fn: TimeFunction, t: np.ndarray) -> np.ndarray:
    if callable(fn):
        return np.broadcast_to(np.asarray(fn(t), dtype=float), t.shape).copy()
    vals = np.asarray(fn, dtype=float)
    if vals.shape != t.shape:
        raise ValueError("node values must match the time nodes")
    return vals


def _phi12(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(e^z - 1)/z`` and ``(e^z - 1 - z)/z^2`` with series near zero."""
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    phi1 = np.where(small, 1.0 + z / 2 + z**2 / 6 + z**3 / 24, np.expm1(zs) / zs)
    phi2 = np.where(small, 0.5 + z / 6 + z**2 / 24 + z**3 / 120, (np.expm1(zs) - zs) / zs**2)
    return phi1, phi2


def _groenwall_values(t, alpha, eps, phi0):
    # Per interval: alpha frozen at its trapezoid mean, eps linear; both
    # integrated exactly, so constant coefficients are reproduced to rounding.
    h = np.diff(t)
    z = 0.5 * (alpha[1:] + alpha[:-1]) * h
    growth = np.exp(z)
    phi1, phi2 = _phi12(z)
    source = h * (eps[:-1] * phi1 + (eps[1:] - eps[:-1]) * phi2)
    out = np.empty_like(t)
    out[0] = phi0
    for k in range(len(h)):
        out[k + 1] = growth[k] * out[k] + source[k]
    return out


def groenwall_bound(
    alpha: TimeFunction,
    eps: TimeFunction,
    phi0: float,
    time_nodes: Sequence[float],
) -> GroenwallCertificate:
    """``phi(t) <= e^{A(t)} phi0 + int_0^t e^{A(t)-A(s)} eps(s) ds`` with ``A = int alpha``.

    ``alpha`` and ``eps`` are callables of time or arrays of node values.
    ``A`` uses the trapezoid rule; the source integral is exact for ``eps``
    linear between nodes.
    """
    t = np.asarray(time_nodes, dtype=float)
    if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
        raise ValueError("time nodes must be strictly increasing")
    a = _node_values(alpha, t)
    e = _node_values(eps, t)
    return GroenwallCertificate(t, a, e, _groenwall_values(t, a, e, phi0), float(phi0))


def uniformity_check(series: Sequence[tuple[float, float]], split: float, tolerance_factor: float = 1.5):
    """Compare ``sup`` of the series on ``[0, split*T]`` and ``(split*T, T]``.

    Returns ``(sup_early, sup_late, uniform)``.
    """
    if not series:
        raise ValueError("series is empty")
    if not 0 < split < 1:
        raise ValueError("split must lie in (0, 1)")
    t = np.array([s[0] for s in series], dtype=float)
    v = np.array([s[1] for s in series], dtype=float)
    cut = split * t.max()
    early = v[t <= cut]
    late = v[t > cut]
    sup_early = float(early.max()) if early.size else 0.0
    sup_late = float(late.max()) if late.size else 0.0
    return sup_early, sup_late, bool(sup_late <= tolerance_factor * sup_early)
