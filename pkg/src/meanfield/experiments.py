"""Named experiment pipelines, result records and plot-data emission."""

from __future__ import annotations

import json
import logging
import math
import traceback
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from . import __version__
from .analysis import (
    alternative_rate,
    compare_one_body,
    fit_rate,
    groenwall_bound,
    theorem_rate,
    uniformity_check,
)
from .config import ExperimentConfig, config_hash
from .grid import ComplexField, Grid, make_grid, norm
from .io import atomic_write_text, read_csv, write_csv, write_json
from .manybody import (
    check_budget,
    condensate_fraction,
    evolve_manybody,
    product_state,
    trace_distance,
)
from .onebody import (
    Cubic,
    Hartree,
    OneBodyProblem,
    M_functional,
    bootstrap_root,
    evolve,
    linear_decay_probe,
    measure_decay,
    measure_time_derivative_decay,
    scaled_hartree,
)
from .potentials import (
    KATO_THRESHOLD,
    ROLLNIK_THRESHOLD,
    InteractionSpec,
    PotentialSpec,
    check_decay_condition,
    check_rollnik,
    derivative_sup_norms,
    interaction_integral,
    sample_interaction,
    sample_potential,
    second_moment,
)

__all__ = ["ResultRecord", "run_experiment", "emit_plotdata", "build_initial_state"]

log = logging.getLogger(__name__)

FAILURE_MARKER = "FAILED"
RECORD_NAME = "record.json"


@dataclass
class ResultRecord:
    experiment: str
    config_hash: str
    output_dir: str
    started: str
    finished: str | None = None
    software_version: str = __version__
    seed: int = 0
    files: dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "ResultRecord":
        path = Path(path)
        if path.is_dir():
            path = path / RECORD_NAME
        return cls(**json.loads(path.read_text()))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# -- builders ---------------------------------------------------------------


def _grid(cfg: ExperimentConfig) -> Grid:
    g = cfg.grid
    return make_grid(g.dim, g.grid_points, g.box_length)


def _potential_spec(cfg: ExperimentConfig) -> PotentialSpec:
    p = cfg.potential
    return PotentialSpec(p.family, p.amplitude, p.width, tuple(p.center))


def _interaction_spec(cfg: ExperimentConfig) -> InteractionSpec:
    i = cfg.interaction
    return InteractionSpec(i.family, i.amplitude, i.width, i.gamma, i.C_w)


def _potential(cfg: ExperimentConfig, grid: Grid) -> ComplexField | None:
    if cfg.potential.family == "zero":
        return None
    return sample_potential(_potential_spec(cfg), grid)


def build_initial_state(cfg: ExperimentConfig, grid: Grid) -> ComplexField:
    """Normalized initial profile: a Gaussian, or a seeded smooth random one."""
    init = cfg.initial
    c = tuple(init.center) or (0.0,) * grid.dim
    s = init.width
    mesh = grid.mesh()
    envelope = np.exp(-sum((x - ci) ** 2 for x, ci in zip(mesh, c)) / (2 * s**2))
    vals = envelope * np.exp(2j * np.pi * init.momentum * mesh[0])
    if init.profile == "random":
        rng = np.random.default_rng(cfg.experiment.seed)
        noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        # Low-pass: keep frequencies below 1/s so the profile stays smooth.
        cutoff = np.exp(-grid.xi_squared_fft * s**2 * 4.0)
        smooth = sfft.ifftn(sfft.fftn(noise) * cutoff)
        vals = vals * (1.0 + smooth / max(np.max(np.abs(smooth)), 1e-300))
    f = ComplexField(grid, vals)
    return f.with_values(f.values / norm(f))


def _nonlinearity(cfg: ExperimentConfig, grid: Grid, kind: str | None = None, N: int | None = None, beta: float | None = None):
    kind = kind or cfg.coupling.nonlinearity
    spec = _interaction_spec(cfg)
    if kind == "hartree":
        return Hartree(sample_interaction(spec, grid))
    if kind == "scaled_hartree":
        return scaled_hartree(spec, N or cfg.coupling.N, cfg.coupling.beta if beta is None else beta, grid)
    return Cubic(interaction_integral(sample_interaction(spec, grid)))


def _snapshot_times(cfg: ExperimentConfig) -> np.ndarray:
    t = cfg.time
    n_steps = max(1, math.ceil(t.t_max / t.dt - 1e-9))
    dt = t.t_max / n_steps
    idx = np.arange(0, n_steps + 1, t.snapshot_stride)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx * dt


def _drifts(obs) -> dict:
    e0 = obs.energy[0]
    return {
        "mass_drift": float(np.max(np.abs(obs.l2 - 1.0))),
        "energy_drift_relative": float(np.max(np.abs(obs.energy - e0)) / abs(e0)) if e0 else float(np.max(np.abs(obs.energy))),
        "max_boundary_mass": float(np.max(obs.boundary_mass)),
    }


# -- pipelines --------------------------------------------------------------


def _run_dispersive(cfg, out: Path, record: ResultRecord, workers: int) -> None:
    grid = _grid(cfg)
    u0 = build_initial_state(cfg, grid)
    V = _potential(cfg, grid)
    problem = OneBodyProblem(grid, u0, V, _nonlinearity(cfg, grid), cfg.coupling.lam)
    exponent = cfg.analysis.exponent if cfg.analysis.exponent is not None else grid.dim / 2
    traj = evolve(problem, cfg.time.t_max, cfg.time.dt, _snapshot_times(cfg))
    record.files["trajectory"] = str(traj.observables.to_csv(out / "trajectory.csv"))
    series, running = measure_decay(traj, exponent)
    record.files["decay"] = str(
        write_csv(out / "decay.csv", ("t", "weighted_sup", "running_sup"), ((t, v, r) for (t, v), r in zip(series, running)))
    )
    if len(traj.times) >= 3:
        deriv = measure_time_derivative_decay(traj, exponent)
        record.files["derivative_decay"] = str(write_csv(out / "derivative_decay.csv", ("t", "weighted_dt_sup"), deriv))
    early, late, uniform = uniformity_check(series, cfg.analysis.split, cfg.analysis.tolerance_factor)
    record.summary.update(
        exponent=exponent,
        sup_early=early,
        sup_late=late,
        uniform=uniform,
        weighted_sup_final=series[-1][1],
        M_T=M_functional(traj),
        potential_norms=derivative_sup_norms(V) if V is not None else None,
        **_drifts(traj.observables),
    )


def _run_linear_decay(cfg, out: Path, record: ResultRecord, workers: int) -> None:
    grid = _grid(cfg)
    f = build_initial_state(cfg, grid)
    pairs, c_v = linear_decay_probe(_potential(cfg, grid), f, cfg.linear_decay.times, cfg.time.dt)
    record.files["ratios"] = str(write_csv(out / "linear_decay.csv", ("t", "ratio"), pairs))
    record.summary.update(C_V=c_v, free_constant=(4 * np.pi) ** (-grid.dim / 2), ratios=pairs)


def _run_rollnik(cfg, out: Path, record: ResultRecord, workers: int) -> None:
    grid = _grid(cfg)
    r, k, ok = check_rollnik(_potential_spec(cfg), grid)
    payload = {
        "rollnik_integral": r,
        "global_kato_integral": k,
        "admissible": ok,
        "rollnik_threshold": ROLLNIK_THRESHOLD,
        "kato_threshold": KATO_THRESHOLD,
    }
    record.files["rollnik"] = str(write_json(out / "rollnik.json", payload))
    record.summary.update(payload)


def _pool(workers: int) -> ThreadPoolExecutor:
    return ThreadPoolExecutor(max_workers=max(1, workers))


def _run_rate_sweep(cfg, out: Path, record: ResultRecord, workers: int) -> None:
    grid = _grid(cfg)
    u0 = build_initial_state(cfg, grid)
    V = _potential(cfg, grid)
    lam = cfg.coupling.lam
    t_max, dt = cfg.time.t_max, cfg.time.dt
    times = _snapshot_times(cfg)
    window = cfg.analysis.window
    ref = evolve(OneBodyProblem(grid, u0, V, _nonlinearity(cfg, grid, "cubic"), lam), t_max, dt, times)
    Ns = sorted(set(cfg.sweep.N), reverse=True)
    cells = [(beta, N) for N in Ns for beta in cfg.sweep.beta]

    def run_cell(cell):
        beta, N = cell
        phi = evolve(OneBodyProblem(grid, u0, V, _nonlinearity(cfg, grid, "scaled_hartree", N, beta), lam), t_max, dt, times)
        use = [t for t in times if window is None or t <= window + 1e-12]
        pairs, sup = compare_one_body(ref, phi, use)
        return cell, sup

    with warnings.catch_warnings(record=True) as caught, _pool(workers) as pool:
        warnings.simplefilter("always")
        results = dict(pool.map(run_cell, cells))
    for w in caught:
        log.warning("%s", w.message)

    gamma = cfg.interaction.gamma
    fits = []
    for beta in cfg.sweep.beta:
        samples = [(N, results[(beta, N)]) for N in sorted(set(cfg.sweep.N))]
        tag = f"{beta:g}"
        record.files[f"errors_beta{tag}"] = str(write_csv(out / f"rate_beta{tag}.csv", ("N", "sup_error"), samples))
        fit = fit_rate(samples)
        payload = fit.to_json(
            beta=beta,
            predicted_exponent=-beta,
            theorem_exponent=-theorem_rate(beta),
            alternative_exponent=-alternative_rate(beta, gamma),
        )
        record.files[f"fit_beta{tag}"] = str(write_json(out / f"rate_beta{tag}.json", payload))
        fits.append(payload)
    w = sample_interaction(_interaction_spec(cfg), grid)
    record.summary["fits"] = fits
    record.summary["interaction"] = {
        "a": interaction_integral(w),
        "second_moment": second_moment(w),
        "decay_condition": check_decay_condition(_interaction_spec(cfg)),
    }


def _run_manybody(cfg, out: Path, record: ResultRecord, workers: int) -> None:
    grid = _grid(cfg)
    Ns = sorted(set(cfg.sweep.N), reverse=True)
    for N in Ns:
        check_budget(grid, N)
    u0 = build_initial_state(cfg, grid)
    V = _potential(cfg, grid)
    lam, beta = cfg.coupling.lam, cfg.coupling.beta
    t_max, dt = cfg.time.t_max, cfg.time.dt
    times = _snapshot_times(cfg)
    kind = "hartree" if beta == 0 else "cubic"
    ref = evolve(OneBodyProblem(grid, u0, V, _nonlinearity(cfg, grid, kind), lam), t_max, dt, times)
    spec = _interaction_spec(cfg)

    def run_cell(N):
        _, recs = evolve_manybody(product_state(u0, N), V, spec, lam, beta, t_max, dt, times)
        rows = []
        for r in recs:
            rows.append((r.t, trace_distance(r.gamma, ref.snapshot_at(r.t)), condensate_fraction(r.gamma), r.mass, r.energy))
        return N, rows, max(r.symmetry_defect for r in recs)

    with _pool(workers) as pool:
        results = {N: (rows, sym) for N, rows, sym in pool.map(run_cell, Ns)}

    per_N = {}
    sups = []
    for N in sorted(results):
        rows, sym = results[N]
        record.files[f"trace_N{N}"] = str(
            write_csv(out / f"manybody_N{N}.csv", ("t", "trace_distance", "condensate_fraction", "mass", "energy"), rows)
        )
        td = [(r[0], r[1]) for r in rows]
        early, late, uniform = uniformity_check(td, cfg.analysis.split, cfg.analysis.tolerance_factor)
        e = np.array([r[4] for r in rows])
        m = np.array([r[3] for r in rows])
        sup = max(v for _, v in td)
        sups.append((N, sup))
        per_N[str(N)] = {
            "sup_trace_distance": sup,
            "sup_early": early,
            "sup_late": late,
            "uniform": uniform,
            "symmetry_defect": sym,
            "mass_drift": float(np.max(np.abs(m - 1.0))),
            "energy_drift_relative": float(np.max(np.abs(e - e[0])) / abs(e[0])) if e[0] else None,
        }
    summary = {"per_N": per_N, "beta": beta, "predicted_exponent": -theorem_rate(beta)}
    if len(sups) >= 3 and all(s > 0 for _, s in sups):
        fit = fit_rate(sups)
        summary["fit"] = fit.to_json(beta=beta, predicted_exponent=-theorem_rate(beta))
        record.files["fit"] = str(write_json(out / "manybody_fit.json", summary["fit"]))
    record.summary.update(summary)


def _run_groenwall(cfg, out: Path, record: ResultRecord, workers: int) -> None:
    g = cfg.groenwall
    N, beta = cfg.coupling.N, cfg.coupling.beta
    t = np.linspace(0.0, cfg.time.t_max, g.nodes)
    alpha = g.alpha_scale / (1.0 + t) ** g.alpha_power
    eps = g.eps_scale * float(N) ** (-2.0 * beta) / (1.0 + t) ** g.eps_power
    cert = groenwall_bound(alpha, eps, g.phi0, t)
    record.files["certificate"] = str(
        write_csv(out / "groenwall.csv", ("t", "alpha", "eps", "bound"), zip(t, alpha, eps, cert.bound_values))
    )
    record.summary.update(
        sup_bound=float(np.max(cert.bound_values)),
        final_bound=float(cert.bound_values[-1]),
        verified=cert.verify(),
        N=N,
        beta=beta,
    )


def _run_bootstrap(cfg, out: Path, record: ResultRecord, workers: int) -> None:
    b = cfg.bootstrap
    root = bootstrap_root(b.eps, b.C)
    payload = {"eps": b.eps, "C": b.C, "root": root, "discriminant": 27.0 * b.C * b.eps**2}
    record.files["root"] = str(write_json(out / "bootstrap.json", payload))
    record.summary.update(payload)


_PIPELINES = {
    "dispersive": _run_dispersive,
    "linear-decay": _run_linear_decay,
    "rollnik": _run_rollnik,
    "rate-sweep": _run_rate_sweep,
    "manybody-trace": _run_manybody,
    "groenwall-cert": _run_groenwall,
    "bootstrap": _run_bootstrap,
}

_PLOT_KIND = {"dispersive": "decay", "rate-sweep": "rate", "manybody-trace": "trace"}


def run_experiment(cfg: ExperimentConfig, output_dir: str | Path | None = None, workers: int = 1) -> ResultRecord:
    """Run the configured pipeline, writing artifacts and ``record.json``.

    On failure the partial artifacts are kept and a ``FAILED`` marker with the
    traceback is written before the exception propagates.
    """
    out = Path(output_dir or cfg.output.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / FAILURE_MARKER
    if marker.exists():
        marker.unlink()
    record = ResultRecord(
        experiment=cfg.name,
        config_hash=config_hash(cfg),
        output_dir=str(out),
        started=_now(),
        seed=cfg.experiment.seed,
    )
    write_json(out / "config.json", cfg.model_dump(mode="json", by_alias=True))
    try:
        _PIPELINES[cfg.name](cfg, out, record, workers)
    except BaseException as exc:
        atomic_write_text(marker, f"{type(exc).__name__}: {exc}\n\n{traceback.format_exc()}")
        record.summary["failure"] = f"{type(exc).__name__}: {exc}"
        write_json(out / RECORD_NAME, asdict(record))
        raise
    record.finished = _now()
    kind = _PLOT_KIND.get(cfg.name)
    if kind:
        record.files[f"plot_{kind}"] = str(emit_plotdata(record, kind))
    write_json(out / RECORD_NAME, asdict(record))
    return record


def emit_plotdata(record: ResultRecord, kind: str) -> Path:
    """Whitespace-separated series for external plotting; header line starts with ``#``."""
    out = Path(record.output_dir)
    lines: list[str] = []
    if kind == "decay":
        if "decay" not in record.files:
            raise KeyError("record has no decay payload")
        _, rows = read_csv(record.files["decay"])
        lines.append("# t  weighted_sup")
        lines += [f"{r[0]:.17g}  {r[1]:.17g}" for r in rows]
    elif kind == "rate":
        fits = [k for k in record.files if k.startswith("fit_beta")]
        if not fits:
            raise KeyError("record has no rate payload")
        lines.append("# log10_N  log10_error  fitted_line")
        for key in sorted(fits):
            payload = json.loads(Path(record.files[key]).read_text())
            lines.append(f"# beta={payload['beta']:g} fitted_exponent={payload['fitted_exponent']:.6g}")
            pts = payload["samples"]
            x = np.log([n for n, _ in pts])
            y = np.log([e for _, e in pts])
            slope, intercept = np.polyfit(x, y, 1)
            for (n, e), xi in zip(pts, x):
                lines.append(f"{math.log10(n):.17g}  {math.log10(e):.17g}  {(slope * xi + intercept) / math.log(10):.17g}")
            lines.append("")
    elif kind == "trace":
        keys = sorted((k for k in record.files if k.startswith("trace_N")), key=lambda k: int(k[7:]))
        if not keys:
            raise KeyError("record has no trace payload")
        lines.append("# t  trace_distance")
        for key in keys:
            lines.append(f"# N={key[7:]}")
            _, rows = read_csv(record.files[key])
            lines += [f"{r[0]:.17g}  {r[1]:.17g}" for r in rows]
            lines.append("")
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    return atomic_write_text(out / f"plot_{kind}.dat", "\n".join(lines).rstrip("\n") + "\n")

