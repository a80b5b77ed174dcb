"""Run configuration: a strict JSON schema validated with pydantic."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import InvalidInputError

EXPERIMENTS = ("spectrum", "pressure", "decay", "verify-gap")
STOCHASTIC = ("pressure", "decay", "verify-gap")


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# geometry ------------------------------------------------------------------


class CircleConfig(Strict):
    kind: Literal["circle"] = "circle"
    length: float = Field(6.283185307179586, gt=0)
    n: int = Field(64, ge=8, le=2048)


class TorusConfig(Strict):
    kind: Literal["torus"]
    lx: float = Field(1.0, gt=0)
    ly: float = Field(1.0, gt=0)
    nx: int = Field(16, ge=8, le=64)
    ny: int = Field(16, ge=8, le=64)


class MatrixConfig(Strict):
    kind: Literal["matrix"]
    path: str
    volume: float = Field(1.0, gt=0)

    @field_validator("path")
    @classmethod
    def _exists(cls, v):
        if not Path(v).is_file():
            raise ValueError(f"matrix file not found: {v}")
        return v


class BolzaConfig(Strict):
    kind: Literal["bolza"]


class DoublingConfig(Strict):
    kind: Literal["doubling"]


GeometryConfig = Annotated[
    Union[CircleConfig, TorusConfig, MatrixConfig, BolzaConfig, DoublingConfig], Field(discriminator="kind")
]


# damping -------------------------------------------------------------------


class ConstantDamping(Strict):
    kind: Literal["constant"] = "constant"
    a0: float = Field(0.1, ge=0)


class StripDamping(Strict):
    kind: Literal["strip"]
    center: float = 0.5
    width: float = Field(0.3, gt=0)
    a0: float = Field(1.0, ge=0)
    smoothing: float = Field(0.05, gt=0)
    axis: int = Field(0, ge=0, le=1)


class SampledDamping(Strict):
    kind: Literal["samples"]
    values: list[float]

    @field_validator("values")
    @classmethod
    def _nonneg(cls, v):
        bad = [i for i, x in enumerate(v) if x < 0]
        if bad:
            raise ValueError(f"damping must be non-negative; negative samples at indices {bad[:10]}")
        return v


DampingConfig = Annotated[Union[ConstantDamping, StripDamping, SampledDamping], Field(discriminator="kind")]


# stages --------------------------------------------------------------------


class SpectrumStage(Strict):
    lambdas: Optional[list[float]] = None
    max_dim: int = Field(4096, ge=16)


class PressureStage(Strict):
    estimator: Literal["schedule", "separated", "cover"] = "schedule"
    epsilon_list: Optional[list[float]] = None
    T_list: Optional[list[int]] = None
    delta: float = Field(0.25, gt=0, lt=0.5)
    sample_budget: int = Field(400_000, ge=1000)
    leaf_window: float = Field(20.0, gt=0)
    cover_diameter: float = Field(0.15, gt=0)
    margin: float = Field(0.1, gt=0)


class DataConfig(Strict):
    kind: Literal["smooth", "mode", "constant"] = "smooth"
    n_modes: int = Field(4, ge=1)
    k: int = 1


class DecayStage(Strict):
    horizon: float = Field(150.0, gt=0)
    method: Literal["ode", "modal"] = "ode"
    output_step: float = Field(0.5, gt=0)
    dyn_horizon: float = Field(200.0, ge=10)
    dyn_samples: int = Field(1000, ge=100)
    data: DataConfig = DataConfig()


class VerifyGapStage(Strict):
    spectrum_csv: Optional[str] = None

    @field_validator("spectrum_csv")
    @classmethod
    def _exists(cls, v):
        if v is not None and not Path(v).is_file():
            raise ValueError(f"spectrum file not found: {v}")
        return v


class RunConfig(Strict):
    experiment: Literal["spectrum", "pressure", "decay", "verify-gap"]
    geometry: GeometryConfig = CircleConfig()
    damping: DampingConfig = ConstantDamping()
    seed: Optional[int] = Field(None, ge=0)
    output: Optional[str] = None
    spectrum: SpectrumStage = SpectrumStage()
    pressure: PressureStage = PressureStage()
    decay: DecayStage = DecayStage()
    verify_gap: VerifyGapStage = VerifyGapStage()

    @model_validator(mode="after")
    def _consistent(self):
        if self.experiment in STOCHASTIC and self.seed is None:
            raise ValueError(f"seed is mandatory for the stochastic experiment {self.experiment!r}")
        kind = self.geometry.kind
        if self.experiment in ("spectrum", "decay") and kind in ("bolza", "doubling"):
            raise ValueError(f"experiment {self.experiment!r} needs a Laplacian; geometry {kind!r} has none")
        if self.experiment == "pressure" and kind == "matrix":
            raise ValueError("pressure needs a geodesic flow; a bare matrix has none")
        if kind in ("bolza", "doubling", "matrix") and self.damping.kind == "strip":
            raise ValueError(f"strip damping needs grid coordinates; geometry {kind!r} has none")
        return self


class ConfigError(InvalidInputError):
    """Config validation failed; ``errors`` lists every violation."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in errors))


def _format_errors(exc: ValidationError) -> list[str]:
    out = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        out.append(f"{loc}: {err['msg']}")
    return out


def parse_config(payload: dict, **overrides) -> RunConfig:
    data = dict(payload)
    wanted = overrides.get("experiment")
    if wanted is not None and data.get("experiment", wanted) != wanted:
        raise ConfigError([f"experiment: config says {data['experiment']!r} but {wanted!r} was requested"])
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path, **overrides) -> RunConfig:
    """Read and validate a JSON config; every violation is reported at once."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config {path} is not valid JSON: {exc}"]) from None
    if not isinstance(payload, dict):
        raise ConfigError(["config must be a JSON object"])
    return parse_config(payload, **overrides)


def default_config(experiment: str) -> dict:
    seed = 0 if experiment in STOCHASTIC else None
    geometry = {"kind": "bolza"} if experiment == "verify-gap" else {"kind": "circle"}
    damping = {"kind": "constant", "a0": 0.8 if experiment in ("pressure", "verify-gap") else 0.1}
    if experiment == "pressure":
        geometry = {"kind": "bolza"}
    cfg = RunConfig.model_validate({"experiment": experiment, "seed": seed, "geometry": geometry, "damping": damping})
    return cfg.model_dump(mode="json")


def config_hash(cfg: RunConfig) -> str:
    import hashlib

    blob = json.dumps(cfg.model_dump(mode="json"), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()
