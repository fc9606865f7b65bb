"""Experiment configuration: YAML files validated against a strict schema.

Every section rejects unknown keys. Defaults: ``dt = 1e-3``, ``M = 64``,
``L = 8 pi``. The README documents every key.
"""

from __future__ import annotations

import hashlib
import math
import os
from importlib import resources
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .dynamics import (
    NonlinearitySpec,
    SolverConfig,
    initial_gaussian,
    initial_plane_wave,
    initial_random_sobolev,
    initial_zero,
)
from .noise import MultiplierOperator
from .spectral import GridField, SpectralGrid, make_grid

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "load_config_text",
    "config_hash",
    "resolve_seed",
    "preset_names",
    "preset_text",
    "EXPERIMENT_KINDS",
]

SEED_ENV = "SNLS_SEED"


class ConfigError(ValueError):
    """Schema or consistency violation; ``errors`` holds ``(key path, message)`` pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{path}: {msg}" if path else msg for path, msg in errors))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PhysicsSection(_Section):
    dimension: int = Field(1, ge=1, le=4)
    criticality: Optional[Literal[0, 1]] = None
    power: Optional[float] = None
    modes: int = 64
    length: float = Field(8 * math.pi, gt=0)
    nonlinearity: bool = True

    @field_validator("modes")
    @classmethod
    def _power_of_two(cls, v):
        if v < 8 or v & (v - 1):
            raise ValueError("modes must be a power of two >= 8")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        if self.criticality == 1 and not 3 <= self.dimension <= 6:
            raise ValueError("energy-critical requires 3 <= d <= 6")
        self.nonlinearity_spec()
        return self

    def nonlinearity_spec(self) -> NonlinearitySpec:
        """Mass-critical unless ``criticality`` or ``power`` says otherwise."""
        k = self.criticality
        if k is None and self.power is None:
            k = 0
        return NonlinearitySpec(self.dimension, k, self.power, self.nonlinearity)


class OperatorSection(_Section):
    kind: Literal["zero", "decay", "explicit"] = "decay"
    amplitude: float = Field(0.5, ge=0)
    decay: float = 1.0
    zero_nyquist: bool = True
    weights: list[tuple[list[int], float]] = Field(default_factory=list)


class InitialSection(_Section):
    kind: Literal["zero", "gaussian", "plane-wave", "random-sobolev"] = "gaussian"
    amplitude: float = 1.0
    width: float = Field(1.0, gt=0)
    mode: list[int] = Field(default_factory=lambda: [1])
    s: float = 1.0
    seed: int = 0


class SolverSection(_Section):
    dt: float = Field(1e-3, gt=0)
    t_final: float = Field(1.0, gt=0)
    snapshot_stride: int = Field(1, ge=1)
    dealias: bool = False


class EnsembleSection(_Section):
    n: int = Field(256, ge=2)
    chunk_size: int = Field(256, ge=1)
    r_max: Optional[float] = None
    control: bool = True
    threads: int = Field(1, ge=1)


class DeterministicConservation(_Section):
    kind: Literal["deterministic-conservation"]
    mass_drift_tol: float = 1e-10
    ratio_range: tuple[float, float] = (3.5, 4.5)


class NoiseIsometry(_Section):
    kind: Literal["noise-isometry"]
    k_se: float = 4.0


class MassBalance(_Section):
    kind: Literal["mass-balance"]
    k_se: float = 4.0
    min_output_times: int = 20


class EnergyBalance(_Section):
    kind: Literal["energy-balance"]
    k_se: float = 4.0


class LWPThreshold(_Section):
    kind: Literal["lwp-threshold"]
    eta: float = Field(0.5, gt=0)
    tolerance: float = 0.05


class PicardContraction(_Section):
    kind: Literal["picard-contraction"]
    iterates: int = Field(10, ge=2)
    tol: float = Field(1e-8, gt=0)
    scales: list[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75, 1.0, 1.25, 1.5])
    ratio_cap: float = 0.5
    min_consecutive: int = 5


class PerturbationSweep(_Section):
    kind: Literal["perturbation-sweep"]
    amplitudes: list[float] = Field(default_factory=lambda: [0.08, 0.04, 0.02, 0.01])
    slope_range: tuple[float, float] = (0.9, 1.1)


class LongTimeAssembly(_Section):
    kind: Literal["long-time-assembly"]
    eta: float = Field(0.3, gt=0)
    eps: float = Field(0.05, gt=0)
    seeds: int = Field(10, ge=1)
    forcing_scale: float = 1.0


class TruncationConvergence(_Section):
    kind: Literal["truncation-convergence"]
    paths: int = Field(10, ge=1)
    cutoffs: Optional[list[float]] = None
    floor: float = 1e-10


class StrichartzSpotcheck(_Section):
    kind: Literal["strichartz-spotcheck"]
    samples: int = Field(100, ge=2)
    spread_cap: float = 10.0


class MomentBounds(_Section):
    kind: Literal["moment-bounds"]
    p: float = Field(2.0, gt=0)
    bootstrap: int = Field(2000, ge=10)


Experiment = Annotated[
    Union[
        DeterministicConservation,
        NoiseIsometry,
        MassBalance,
        EnergyBalance,
        LWPThreshold,
        PicardContraction,
        PerturbationSweep,
        LongTimeAssembly,
        TruncationConvergence,
        StrichartzSpotcheck,
        MomentBounds,
    ],
    Field(discriminator="kind"),
]

EXPERIMENT_KINDS = (
    "deterministic-conservation",
    "noise-isometry",
    "mass-balance",
    "energy-balance",
    "lwp-threshold",
    "picard-contraction",
    "perturbation-sweep",
    "long-time-assembly",
    "truncation-convergence",
    "strichartz-spotcheck",
    "moment-bounds",
)


class ExperimentConfig(_Section):
    experiment: Experiment
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    output: Optional[str] = None
    physics: PhysicsSection = PhysicsSection()
    operator: OperatorSection = OperatorSection()
    initial: InitialSection = InitialSection()
    solver: SolverSection = SolverSection()
    ensemble: EnsembleSection = EnsembleSection()

    @model_validator(mode="after")
    def _solver_grid(self):
        n = self.solver.t_final / self.solver.dt
        if abs(n - round(n)) > 1e-8 * n:
            raise ValueError("solver.t_final must be an integer multiple of solver.dt")
        if self.initial.kind == "plane-wave" and len(self.initial.mode) != self.physics.dimension:
            raise ValueError("initial.mode needs one entry per dimension")
        return self

    @property
    def kind(self) -> str:
        return self.experiment.kind

    def grid(self) -> SpectralGrid:
        p = self.physics
        return make_grid(p.dimension, p.modes, p.length)

    def spec(self) -> NonlinearitySpec:
        return self.physics.nonlinearity_spec()

    def solver_config(self) -> SolverConfig:
        s = self.solver
        return SolverConfig(s.dt, s.t_final, snapshot_stride=s.snapshot_stride, dealias=s.dealias)

    def operator_for(self, grid: SpectralGrid) -> MultiplierOperator:
        o = self.operator
        if o.kind == "zero":
            return MultiplierOperator.zero(grid)
        if o.kind == "decay":
            return MultiplierOperator.decay(grid, o.amplitude, o.decay, o.zero_nyquist)
        return MultiplierOperator.explicit(grid, [(tuple(m), s) for m, s in o.weights])

    def initial_for(self, grid: SpectralGrid) -> GridField:
        i = self.initial
        if i.kind == "zero":
            return initial_zero(grid)
        if i.kind == "gaussian":
            return initial_gaussian(grid, i.amplitude, i.width)
        if i.kind == "plane-wave":
            return initial_plane_wave(grid, i.mode, i.amplitude)
        return initial_random_sobolev(grid, i.s, i.amplitude, i.seed)


def _loc(loc) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        elif part in EXPERIMENT_KINDS:
            continue
        else:
            out += ("." if out else "") + str(part)
    return out


def load_config_text(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([("", f"not valid YAML: {exc}")]) from None
    if not isinstance(data, dict):
        raise ConfigError([("", "top level must be a mapping")])
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        errs = []
        for e in exc.errors():
            msg = e["msg"]
            if e["type"] == "extra_forbidden":
                msg = f"unknown key {e['loc'][-1]!r}"
            errs.append((_loc(e["loc"]), msg.removeprefix("Value error, ")))
        raise ConfigError(errs) from None


def parse_config(path: str | os.PathLike) -> ExperimentConfig:
    """Read and validate a YAML experiment file (``preset:NAME`` selects a bundled preset)."""
    return load_config_text(read_config_text(path))


def read_config_text(path: str | os.PathLike) -> str:
    path = os.fspath(path)
    if path.startswith("preset:"):
        return preset_text(path.split(":", 1)[1])
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def config_hash(text: str | bytes) -> str:
    """Git-style blob hash of the exact config bytes."""
    data = text.encode() if isinstance(text, str) else text
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def resolve_seed(cli_seed: int | None, config: ExperimentConfig, environ=os.environ) -> int:
    """Flag, then config key, then ``SNLS_SEED`` (only when the key is absent), then 0."""
    if cli_seed is not None:
        return int(cli_seed)
    if config.seed is not None:
        return int(config.seed)
    env = environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            val = int(env)
        except ValueError:
            raise ConfigError([("seed", f"{SEED_ENV}={env!r} is not an integer")]) from None
        if not 0 <= val < 2**64:
            raise ConfigError([("seed", f"{SEED_ENV} must be an unsigned 64-bit integer")])
        return val
    return 0


def _presets():
    return resources.files("snlsim").joinpath("presets")


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in _presets().iterdir() if p.name.endswith(".yaml"))


def preset_text(name: str) -> str:
    f = _presets().joinpath(f"{name}.yaml")
    if not f.is_file():
        raise ConfigError([("", f"unknown preset {name!r}; available: {', '.join(preset_names())}")])
    return f.read_text(encoding="utf-8")
