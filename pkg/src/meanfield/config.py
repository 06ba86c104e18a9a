"""Experiment configuration: INI-style sections validated with pydantic.

Example::

    [experiment]
    experiment = dispersive
    seed = 0

    [grid]
    dim = 1
    grid_points = 256
    box_length = 128

    [time]
    t_max = 40
    dt = 0.01

Unknown sections and keys are errors.  Lists are comma separated.
"""

from __future__ import annotations

import configparser
import copy
import hashlib
import json
import math
from typing import Annotated, Literal, Optional

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

__all__ = ["EXPERIMENTS", "ExperimentConfig", "parse_config", "config_hash", "default_config"]

EXPERIMENTS = (
    "dispersive",
    "linear-decay",
    "rollnik",
    "rate-sweep",
    "manybody-trace",
    "groenwall-cert",
    "bootstrap",
)


def _split_list(v):
    if isinstance(v, str):
        return [s for s in (p.strip() for p in v.replace(";", ",").split(",")) if s]
    if isinstance(v, (int, float)):
        return [v]
    return v


def _split_vector(v):
    v = _split_list(v)
    return tuple(float(x) for x in v) if isinstance(v, list) else v


FloatList = Annotated[list[float], BeforeValidator(_split_list)]
IntList = Annotated[list[int], BeforeValidator(_split_list)]
Vector = Annotated[tuple[float, ...], BeforeValidator(_split_vector)]


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ExperimentSection(Section):
    experiment: Literal[EXPERIMENTS]  # type: ignore[valid-type]
    seed: int = 0


class GridSection(Section):
    dim: int = Field(1, ge=1, le=3)
    grid_points: int = 256
    box_length: float = Field(128.0, gt=0)

    @field_validator("grid_points")
    @classmethod
    def _power_of_two(cls, n):
        if n < 8 or n & (n - 1):
            raise ValueError("grid_points must be a power of two >= 8")
        return n


class PotentialSection(Section):
    family: Literal["zero", "gaussian_bump", "sech_squared_well", "cosine_bump"] = "zero"
    amplitude: float = 0.0
    width: float = Field(1.0, gt=0)
    center: Vector = ()


class InteractionSection(Section):
    family: Literal["gaussian", "compact_bump", "delta_limit"] = "gaussian"
    amplitude: float = 1.0
    width: float = Field(1.0, gt=0)
    gamma: float = Field(math.inf, gt=3)
    C_w: float = Field(1.0, gt=0)


class CouplingSection(Section):
    # Python's keyword, so the INI key "lambda" is aliased.
    lam: float = Field(0.0, alias="lambda")
    beta: float = 0.0
    N: int = Field(1, ge=1)
    nonlinearity: Literal["hartree", "scaled_hartree", "cubic"] = "hartree"
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    @field_validator("beta")
    @classmethod
    def _beta_range(cls, b):
        if not 0 <= b < 1 / 3:
            raise ValueError(f"beta = {b} out of range: need 0 <= beta < 1/3")
        return b


class InitialSection(Section):
    profile: Literal["gaussian", "random"] = "gaussian"
    width: float = Field(2.0, gt=0)
    center: Vector = ()
    momentum: float = 0.0


class TimeSection(Section):
    t_max: float = Field(10.0, ge=0)
    dt: float = Field(1e-2, gt=0)
    snapshot_stride: int = Field(10, ge=1)

    @model_validator(mode="after")
    def _dt_fits(self):
        if self.t_max > 0 and self.dt > self.t_max:
            raise ValueError("dt must not exceed t_max")
        return self


class SweepSection(Section):
    N: IntList = []
    beta: FloatList = []

    @field_validator("N")
    @classmethod
    def _positive(cls, ns):
        if any(n < 1 for n in ns):
            raise ValueError("sweep N values must be positive")
        return ns

    @field_validator("beta")
    @classmethod
    def _betas(cls, bs):
        for b in bs:
            if not 0 <= b < 1 / 3:
                raise ValueError(f"beta = {b} out of range: need 0 <= beta < 1/3")
        return bs


class AnalysisSection(Section):
    exponent: Optional[float] = Field(None, ge=0)
    split: float = Field(0.25, gt=0, lt=1)
    tolerance_factor: float = Field(1.5, gt=0)
    window: Optional[float] = Field(None, gt=0)


class LinearDecaySection(Section):
    times: FloatList = [1.0, 2.0, 4.0, 8.0, 16.0]

    @field_validator("times")
    @classmethod
    def _positive(cls, ts):
        if not ts or any(t <= 0 for t in ts):
            raise ValueError("times must be positive")
        return ts


class BootstrapSection(Section):
    eps: float = Field(0.1, ge=0)
    C: float = Field(8.0, gt=0)


class GroenwallSection(Section):
    alpha_scale: float = 3.0
    alpha_power: float = 3.0
    eps_scale: float = 1.0
    eps_power: float = 3.0
    phi0: float = Field(0.0, ge=0)
    nodes: int = Field(10001, ge=2)


class OutputSection(Section):
    output_dir: str = "results"


class ExperimentConfig(Section):
    experiment: ExperimentSection
    grid: GridSection = GridSection()
    potential: PotentialSection = PotentialSection()
    interaction: InteractionSection = InteractionSection()
    coupling: CouplingSection = CouplingSection()
    initial: InitialSection = InitialSection()
    time: TimeSection = TimeSection()
    sweep: SweepSection = SweepSection()
    analysis: AnalysisSection = AnalysisSection()
    linear_decay: LinearDecaySection = LinearDecaySection()
    bootstrap: BootstrapSection = BootstrapSection()
    groenwall: GroenwallSection = GroenwallSection()
    output: OutputSection = OutputSection()

    @property
    def name(self) -> str:
        return self.experiment.experiment

    @model_validator(mode="after")
    def _experiment_requirements(self):
        name = self.experiment.experiment
        if name == "rollnik" and self.grid.dim != 3:
            raise ValueError("rollnik requires grid.dim = 3")
        if name == "rate-sweep":
            if len(set(self.sweep.N)) < 3:
                raise ValueError("rate-sweep needs at least 3 distinct sweep.N values")
            if not self.sweep.beta or any(b == 0 for b in self.sweep.beta):
                raise ValueError("rate-sweep needs sweep.beta values with 0 < beta < 1/3")
        if name == "manybody-trace" and not self.sweep.N:
            raise ValueError("manybody-trace needs sweep.N")
        for sec in ("potential", "initial"):
            c = getattr(self, sec).center
            if c and len(c) != self.grid.dim:
                raise ValueError(f"{sec}.center must have {self.grid.dim} components")
        return self


# Per-experiment defaults, applied beneath the user's file.
_DEFAULTS: dict[str, dict[str, dict[str, object]]] = {
    "dispersive": {
        "grid": {"dim": 1, "grid_points": 2048, "box_length": 1024.0},
        "potential": {"family": "gaussian_bump", "amplitude": 0.5, "width": 1.0},
        "coupling": {"lambda": 0.05},
        "initial": {"width": 2.0},
        "time": {"t_max": 40.0, "dt": 1e-2, "snapshot_stride": 100},
    },
    "linear-decay": {
        "grid": {"dim": 1, "grid_points": 2048, "box_length": 1024.0},
        "potential": {"family": "gaussian_bump", "amplitude": 0.5, "width": 1.0},
        "initial": {"width": 1.0},
        "time": {"dt": 1e-2},
    },
    "rollnik": {
        "grid": {"dim": 3, "grid_points": 32, "box_length": 16.0},
        "potential": {"family": "gaussian_bump", "amplitude": 0.1, "width": 1.0},
    },
    "rate-sweep": {
        "grid": {"dim": 1, "grid_points": 1024, "box_length": 64.0},
        "coupling": {"lambda": 0.05, "nonlinearity": "scaled_hartree"},
        "initial": {"width": 2.0},
        "time": {"t_max": 10.0, "dt": 1e-2, "snapshot_stride": 10},
        "sweep": {"N": "16, 64, 256, 1024, 4096", "beta": "0.1, 0.2"},
    },
    "manybody-trace": {
        "grid": {"dim": 1, "grid_points": 32, "box_length": 16.0},
        "potential": {"family": "gaussian_bump", "amplitude": 0.5, "width": 1.0},
        "coupling": {"lambda": 0.1},
        "initial": {"width": 0.5},
        "time": {"t_max": 2.0, "dt": 1e-2, "snapshot_stride": 10},
        "sweep": {"N": "2, 3, 4"},
        "analysis": {"split": 0.5},
    },
    "groenwall-cert": {
        "coupling": {"N": 1024, "beta": 0.2},
        "time": {"t_max": 10.0},
    },
    "bootstrap": {},
}


def default_config(experiment: str) -> dict[str, dict[str, object]]:
    if experiment not in _DEFAULTS:
        raise ConfigError([f"experiment.experiment: unknown experiment {experiment!r}"])
    return copy.deepcopy(_DEFAULTS[experiment])


def _read_sections(text: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), empty_lines_in_values=False
    )
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from exc
    return {s: dict(parser[s]) for s in parser.sections()}


def _format_errors(exc: ValidationError) -> list[str]:
    out = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "config"
        if err["type"] == "extra_forbidden":
            out.append(f"{loc}: unknown key")
        else:
            out.append(f"{loc}: {err['msg'].removeprefix('Value error, ')}")
    return out


def parse_config(text: str, experiment: str | None = None) -> ExperimentConfig:
    """Parse and validate a config document.

    ``experiment`` (e.g. the CLI subcommand) fills in ``[experiment]`` when
    the file omits it and must agree with it otherwise.
    """
    sections = _read_sections(text)
    declared = sections.get("experiment", {}).get("experiment")
    if declared and experiment and declared != experiment:
        raise ConfigError([f"experiment.experiment: file declares {declared!r}, command is {experiment!r}"])
    name = declared or experiment
    if name is None:
        raise ConfigError(["experiment.experiment: missing required field"])
    if name not in EXPERIMENTS:
        raise ConfigError([f"experiment.experiment: unknown experiment {name!r}"])
    data: dict[str, dict[str, object]] = default_config(name)
    for sec, values in sections.items():
        data.setdefault(sec, {}).update(values)
    data.setdefault("experiment", {})["experiment"] = name
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from exc


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON form, excluding the output location."""
    payload = config.model_dump(mode="json", by_alias=True, exclude={"output"})
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=True)
    return hashlib.sha256(text.encode()).hexdigest()
