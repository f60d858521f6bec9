"""
Validated configuration documents. Every model forbids unknown keys; validation failures are
re-raised as ValidationError listing each offending field.
"""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, TypeVar

import pydantic
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .exceptions import NotFoundError, ValidationError
from .utils import canonical_hash, read_json

THREADS_ENV = "STARDOMAIN_THREADS"
TAU_O_GRID = (0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 0.999)

Model = TypeVar("Model", bound=BaseModel)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class LossWeights(_Strict):
    w_occupancy: float = Field(1.0, ge=0)
    w_surface: float = Field(10.0, ge=0)
    w_overlap: float = Field(0.0, ge=0)
    tau_r: float = Field(1.0, gt=0)


class FitConfig(_Strict):
    n_primitives: int = Field(30, ge=1)
    steps: int = Field(20000, ge=0)
    layer_sizes: tuple[int, ...] = (3, 64, 64, 1)
    target_points: int = Field(4096, ge=1)
    directions_per_primitive: int = Field(400, ge=1)
    occupancy_points: int = Field(2048, ge=1)
    learning_rate: float = Field(1e-4, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    alpha: float = Field(100.0, gt=0)
    tau_s: float = Field(0.1, gt=0, lt=1)
    tau_o: Optional[Annotated[float, Field(gt=0.5, lt=1)]] = None
    tau_o_grid: tuple[float, ...] = TAU_O_GRID
    weights: LossWeights = Field(default_factory=LossWeights)
    direction_scheme: Literal["uniform-random", "fibonacci"] = "uniform-random"
    surface_extraction: bool = True
    warmup_fraction: float = Field(0.05, ge=0, le=1)
    validation_fraction: float = Field(0.1, ge=0, lt=1)
    resample_every: int = Field(100, ge=1)
    log_every: int = Field(100, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_shapes(self) -> "FitConfig":
        sizes = self.layer_sizes
        if len(sizes) < 2 or sizes[0] != 3 or sizes[-1] != 1 or min(sizes) < 1:
            raise ValueError("layer_sizes must start at 3, end at 1 and contain positive counts")
        if any(not 0.5 < t < 1 for t in self.tau_o_grid):
            raise ValueError("every tau_o_grid value must lie in (0.5, 1)")
        return self


class MetricOptions(_Strict):
    fscore_threshold: float = Field(0.01, gt=0)
    cd_scale: float = Field(10.0, gt=0)
    eval_surface_points: int = Field(100000, ge=1)
    iou_points: int = Field(100000, ge=1)
    overlap_points: int = Field(100000, ge=1)
    mc_resolution: Literal[32, 64, 128] = 64
    icosphere_level: int = Field(4, ge=0, le=6)
    seed: int = 0


class SampleConfig(_Strict):
    surface_points: int = Field(100000, ge=1)
    occupancy_points: int = Field(100000, ge=1)
    near_surface_fraction: float = Field(0.0, ge=0, le=1)
    seed: int = 0


class MeshOptions(_Strict):
    mode: Literal["explicit", "mc"] = "explicit"
    level: int = Field(4, ge=0, le=6)
    resolution: Literal[32, 64, 128] = 128
    repeats: int = Field(10, ge=1)


class RunConfig(_Strict):
    fit: FitConfig = Field(default_factory=FitConfig)
    metrics: MetricOptions = Field(default_factory=MetricOptions)
    sample: SampleConfig = Field(default_factory=SampleConfig)
    mesh: MeshOptions = Field(default_factory=MeshOptions)
    data_dir: Optional[str] = None
    out_dir: str = "out"


def _violations(e: pydantic.ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors())


def validate(model: type[Model], data: dict[str, Any]) -> Model:
    """
    :raise ValidationError: Listing every violating field path
    """
    try:
        return model.model_validate(data)
    except pydantic.ValidationError as e:
        raise ValidationError(f"invalid {model.__name__}: {_violations(e)}") from None


def load_config(path: Path) -> RunConfig:
    """
    :raise NotFoundError: If the file does not exist
    :raise ValidationError: If the document is not valid JSON or violates the schema
    """
    if not Path(path).exists():
        raise NotFoundError(f"config file {path} not found")
    try:
        data = read_json(Path(path))
    except json.JSONDecodeError as e:
        raise ValidationError(f"config file {path} is not valid JSON: {e}") from None
    return validate(RunConfig, data)


def config_hash(model: BaseModel) -> str:
    return canonical_hash(model.model_dump(mode="json"))


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        threads = int(raw)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if threads < 1:
        raise ValidationError(f"{THREADS_ENV} must be >= 1, got {threads}")
    return threads
