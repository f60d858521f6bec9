"""
Per-shape optimization of a PrimitiveAssembly (auto-decoder fitting: parameters are optimized
directly for one target instead of being predicted by an encoder).
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .assembly import (PrimitiveAssembly, composite_indicators, composite_volume, extract_surface, mesh_from_volume)
from .config import FitConfig, config_hash
from .diff_engine import AdamState, MlpParams, adam_step, mlp_forward, no_grad, zero_grad
from .exceptions import NumericalError, ValidationError
from .losses import occupancy_loss, overlap_regularizer, surface_loss, total_loss
from .metrics import fscore
from .nsd import IndicatorConfig, NsdPrimitive
from .shape_io import ShapeSample, sample_surface
from .sphere_geom import DirectionSet, sample_directions
from .utils import write_csv

logger = logging.getLogger(__name__)

LLOYD_ITERATIONS = 10
GRID_SEARCH_RESOLUTION = 32
GRID_SEARCH_SAMPLES = 10000
PLACEHOLDER_TAU_O = 0.99
LOSS_COLUMNS = ("step", "surface", "occupancy", "overlap", "total", "wall_time")


@dataclass(frozen=True)
class LossRecord:
    step: int
    surface: float
    occupancy: float
    overlap: float
    total: float
    wall_time: float

    def as_row(self) -> list[float]:
        return [self.step, self.surface, self.occupancy, self.overlap, self.total, self.wall_time]


@dataclass
class FitReport:
    """
    Attributes:
        records (list[LossRecord]): One entry per step, in step order
        tau_o (float): Iso-level stored in the fitted assembly
        tau_o_scores (dict[str, float]): F-score per searched iso-level (empty when tau_o was fixed)
        timings (dict[str, float]): Wall time per phase in seconds
        config_hash (str): Hash of the FitConfig that produced the fit
        data_hash (str): Fingerprint of the target sample
        checkpoint (str | None): Where the assembly was stored, if it was
        metrics (dict[str, Any]): Final metric values, if evaluated
    """
    records: list[LossRecord] = field(default_factory=list)
    tau_o: float = PLACEHOLDER_TAU_O
    tau_o_scores: dict[str, float] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    config_hash: str = ""
    data_hash: str = ""
    checkpoint: Optional[str] = None
    metrics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        steps = [r.step for r in self.records]
        if steps != sorted(steps):
            raise ValidationError("loss records must be in step order")

    @property
    def id(self) -> str:
        if not self.data_hash:
            return self.config_hash
        return f"{self.config_hash[:16]}-{self.data_hash[:16]}"

    def final_losses(self) -> dict[str, float]:
        if not self.records:
            return {}
        last = self.records[-1]
        return {"surface": last.surface, "occupancy": last.occupancy, "overlap": last.overlap, "total": last.total}

    def smoothed_totals(self, window: int = 100) -> np.ndarray:
        totals = np.array([r.total for r in self.records])
        if len(totals) < window:
            return totals
        return np.convolve(totals, np.ones(window) / window, mode="valid")

    def write_loss_log(self, path: Path) -> None:
        rows = np.array([r.as_row() for r in self.records]).reshape(-1, len(LOSS_COLUMNS))
        write_csv(path, LOSS_COLUMNS, rows)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "config_hash": self.config_hash,
            "data_hash": self.data_hash,
            "steps": len(self.records),
            "final_losses": self.final_losses(),
            "tau_o": self.tau_o,
            "tau_o_scores": self.tau_o_scores,
            "timings": self.timings,
            "checkpoint": self.checkpoint,
            "metrics": self.metrics,
            "records": [r.as_row() for r in self.records],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "FitReport":
        return cls(
            records=[LossRecord(int(r[0]), *map(float, r[1:])) for r in data.get("records", [])],
            tau_o=float(data["tau_o"]),
            tau_o_scores={k: float(v) for k, v in data.get("tau_o_scores", {}).items()},
            timings={k: float(v) for k, v in data.get("timings", {}).items()},
            config_hash=data.get("config_hash", ""),
            data_hash=data.get("data_hash", ""),
            checkpoint=data.get("checkpoint"),
            metrics=data.get("metrics", {}),
        )


def seed_translations(points: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Farthest-point seeding followed by Lloyd iterations (k-means) over the points."""
    centers = [points[rng.integers(len(points))]]
    nearest = np.linalg.norm(points - centers[0], axis=1)
    for _ in range(1, n):
        centers.append(points[int(nearest.argmax())])
        nearest = np.minimum(nearest, np.linalg.norm(points - centers[-1], axis=1))
    centers = np.array(centers)

    for _ in range(LLOYD_ITERATIONS):
        assignment = np.argmin(np.linalg.norm(points[:, None] - centers[None], axis=2), axis=1)
        for k in range(n):
            members = points[assignment == k]
            if len(members):
                centers[k] = members.mean(axis=0)
    return centers


def init_assembly(cfg: FitConfig, target: ShapeSample) -> PrimitiveAssembly:
    """
    N primitives with freshly initialized MLPs, translated to k-means centers of the target surface.

    :raise ValidationError: If N exceeds the number of surface points
    """
    points = target.surface_points
    if cfg.n_primitives > len(points):
        raise ValidationError(f"{cfg.n_primitives} primitives but only {len(points)} surface points")

    rng = np.random.default_rng(cfg.seed)
    centers = seed_translations(points, cfg.n_primitives, rng)
    primitives = [NsdPrimitive.initialize(rng, center, index=i, layer_sizes=cfg.layer_sizes)
                  for i, center in enumerate(centers)]
    return PrimitiveAssembly(
        primitives=primitives,
        cfg=IndicatorConfig(alpha=cfg.alpha),
        tau_o=cfg.tau_o if cfg.tau_o is not None else PLACEHOLDER_TAU_O,
        tau_s=cfg.tau_s,
    )


def fit(cfg: FitConfig, target: ShapeSample, on_step: Callable[[LossRecord], None] | None = None) \
        -> tuple[PrimitiveAssembly, FitReport]:
    """
    Run cfg.steps Adam iterations on the weighted surface/occupancy/overlap objective.

    The surface filter is off for the first warmup_fraction of the steps (and always when
    cfg.surface_extraction is False). When cfg.tau_o is None and at least one step runs, a
    validation_fraction of the surface points is held out of training and tau_o is grid-searched
    against it at the end.

    :raise NumericalError: If a loss component becomes non-finite, naming the step and component
    """
    if len(target.occupancy_points) == 0 or len(target.surface_points) == 0:
        raise ValidationError("fitting needs surface and occupancy samples")

    search = cfg.tau_o is None and cfg.steps > 0
    train, validation = _split_validation(cfg, target) if search else (target, target)
    assembly = init_assembly(cfg, train)
    report = FitReport(config_hash=config_hash(cfg), data_hash=target.fingerprint(), tau_o=assembly.tau_o)
    params = assembly.parameters()
    state = AdamState.for_parameters(params, lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
    rng = np.random.default_rng([cfg.seed, 1])
    warmup = math.ceil(cfg.warmup_fraction * cfg.steps)
    surface_pool = train.surface_points
    n_targets = min(cfg.target_points, len(surface_pool))
    n_occupancy = min(cfg.occupancy_points, len(target.occupancy_points))

    logger.info("fitting %d primitives for %d steps (config %s)", cfg.n_primitives, cfg.steps, report.config_hash[:12])
    started = time.perf_counter()
    subset = surface_pool
    for step in range(cfg.steps):
        if step % cfg.resample_every == 0:
            subset = surface_pool[rng.choice(len(surface_pool), size=n_targets, replace=False)]
        dirs = sample_directions(cfg.directions_per_primitive, cfg.direction_scheme, rng)
        picks = rng.choice(len(target.occupancy_points), size=n_occupancy, replace=False)
        occupancy_points = target.occupancy_points[picks]

        surface = extract_surface(assembly, dirs, surface_filter=cfg.surface_extraction and step >= warmup)
        components = {
            "surface": surface_loss(surface.points, subset),
            "occupancy": occupancy_loss(composite_indicators(assembly, occupancy_points),
                                        target.occupancy_labels[picks]),
        }
        if cfg.weights.w_overlap > 0:
            components["overlap"] = overlap_regularizer(assembly, occupancy_points, cfg.weights.tau_r)

        try:
            total = total_loss(cfg.weights, components)
        except NumericalError as e:
            raise NumericalError(f"step {step}: {e}") from None

        zero_grad(params)
        total.backward()
        adam_step(state, params, [p.grad for p in params])

        record = LossRecord(
            step=step,
            surface=components["surface"].item(),
            occupancy=components["occupancy"].item(),
            overlap=components["overlap"].item() if "overlap" in components else 0.0,
            total=total.item(),
            wall_time=time.perf_counter() - started,
        )
        report.records.append(record)
        if on_step is not None:
            on_step(record)
        if step % cfg.log_every == 0:
            logger.debug("step %d: surface %.5f occupancy %.5f overlap %.5f total %.5f",
                         step, record.surface, record.occupancy, record.overlap, record.total)
    report.timings["fit"] = time.perf_counter() - started

    if search:
        started = time.perf_counter()
        scores = score_tau_grid(assembly, validation, cfg.tau_o_grid)
        report.tau_o_scores = {f"{t:g}": s for t, s in scores.items()}
        assembly.tau_o = _best_tau(cfg.tau_o_grid, scores)
        report.timings["tau_search"] = time.perf_counter() - started
    report.tau_o = assembly.tau_o

    logger.info("fit finished in %.1fs, tau_o=%.3f, final losses %s", report.timings["fit"], assembly.tau_o,
                report.final_losses())
    return assembly, report


def _split_validation(cfg: FitConfig, target: ShapeSample) -> tuple[ShapeSample, ShapeSample]:
    """(training, validation) samples; a target too small to split is used for both."""
    if cfg.validation_fraction == 0:
        return target, target
    try:
        return target.split_surface(cfg.validation_fraction, np.random.default_rng([cfg.seed, 2]))
    except ValidationError as e:
        logger.warning("tau_o will be scored on the training surface: %s", e)
        return target, target


def score_tau_grid(assembly: PrimitiveAssembly, target: ShapeSample, grid: Sequence[float],
                   resolution: int = GRID_SEARCH_RESOLUTION, threshold: float = 0.01, seed: int = 0) -> dict[float, float]:
    """F-score of the marching-cubes mesh at each iso-level (0 for an empty mesh)."""
    if len(grid) == 0:
        raise ValidationError("tau_o grid must not be empty")
    volume, spacing = composite_volume(assembly, resolution)
    scores = {}
    for tau in grid:
        mesh = mesh_from_volume(volume, spacing, tau)
        if mesh.is_empty():
            scores[tau] = 0.0
            continue
        samples = sample_surface(mesh, GRID_SEARCH_SAMPLES, np.random.default_rng(seed))
        scores[tau] = fscore(samples, target.surface_points, threshold)
    return scores


def grid_search_tau_o(assembly: PrimitiveAssembly, target: ShapeSample, grid: Sequence[float],
                      resolution: int = GRID_SEARCH_RESOLUTION) -> float:
    """
    Grid value whose marching-cubes mesh has the highest F-score against the target surface (first on ties).

    :raise ValidationError: If the grid is empty
    """
    return _best_tau(grid, score_tau_grid(assembly, target, grid, resolution))


def _best_tau(grid: Sequence[float], scores: dict[float, float]) -> float:
    best = max(grid, key=lambda tau: scores[tau])
    logger.info("tau_o grid search: %s -> %g", {f"{t:g}": round(s, 2) for t, s in scores.items()}, best)
    return float(best)


def fit_radius(directions: DirectionSet, radii: np.ndarray, steps: int = 3000, learning_rate: float = 1e-3,
               layer_sizes: Sequence[int] = (3, 64, 64, 1), seed: int = 0) -> tuple[MlpParams, list[float]]:
    """
    Regress a single radius network on (direction, radius) samples by mean squared error.

    The output bias starts at the mean radius.
    :return: (fitted network, loss per step)
    """
    radii = np.asarray(radii, dtype=np.float64).reshape(-1)
    if len(radii) != len(directions) or len(radii) == 0:
        raise ValidationError(f"got {len(directions)} directions but {len(radii)} radii")

    mlp = MlpParams.initialize(np.random.default_rng(seed), layer_sizes, output_bias=float(radii.mean()))
    params = mlp.parameters()
    state = AdamState.for_parameters(params, lr=learning_rate)
    unit = directions.unit_vectors()
    history = []
    for _ in range(steps):
        residual = mlp_forward(mlp, unit).relu() - radii
        loss = (residual * residual).mean()
        if not math.isfinite(loss.item()):
            raise NumericalError("radius regression diverged")
        zero_grad(params)
        loss.backward()
        adam_step(state, params, [p.grad for p in params])
        history.append(loss.item())
    return mlp, history


def predict_radius(mlp: MlpParams, directions: DirectionSet) -> np.ndarray:
    with no_grad():
        return mlp_forward(mlp, directions.unit_vectors()).relu().data
