"""
Evaluation: F-score, Chamfer-L1, volumetric IoU, overlap count, discrete Gaussian curvature and part-label voting.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .assembly import PrimitiveAssembly, assemble_mesh, composite_scores, indicator_matrix
from .diff_engine import no_grad
from .exceptions import ValidationError
from .losses import nearest_neighbors
from .nsd import live_surface_points, signed_distances
from .shape_io import DOMAIN_BOUND, ShapeSample, TriangleMesh, sample_surface
from .sphere_geom import icosphere

logger = logging.getLogger(__name__)

OVERLAP_SCALE = 1000.0


def _check_sets(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    if len(pred) == 0 or len(gt) == 0:
        raise ValidationError("point sets must be non-empty")
    return pred, gt


def fscore(pred: np.ndarray, gt: np.ndarray, threshold: float = 0.01) -> float:
    """Harmonic mean of precision and recall at `threshold`, in percent."""
    if not threshold > 0:
        raise ValidationError(f"threshold must be positive, got {threshold}")
    pred, gt = _check_sets(pred, gt)
    to_gt, _ = nearest_neighbors(pred, gt)
    to_pred, _ = nearest_neighbors(gt, pred)
    precision = float(np.mean(to_gt <= threshold))
    recall = float(np.mean(to_pred <= threshold))
    if precision + recall == 0.0:
        return 0.0
    return 100.0 * 2.0 * precision * recall / (precision + recall)


def chamfer_l1(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean nearest distance pred -> gt plus gt -> pred (unscaled)."""
    pred, gt = _check_sets(pred, gt)
    to_gt, _ = nearest_neighbors(pred, gt)
    to_pred, _ = nearest_neighbors(gt, pred)
    return float(to_gt.mean() + to_pred.mean())


def volumetric_iou(pred_occupied: np.ndarray, gt_occupied: np.ndarray) -> float:
    """Monte Carlo IoU of two occupancy masks over the same sample points; an empty union gives 0."""
    pred_occupied = np.asarray(pred_occupied).astype(bool).reshape(-1)
    gt_occupied = np.asarray(gt_occupied).astype(bool).reshape(-1)
    if pred_occupied.shape != gt_occupied.shape:
        raise ValidationError(f"occupancy masks differ in size: {pred_occupied.shape} vs {gt_occupied.shape}")
    union = np.count_nonzero(pred_occupied | gt_occupied)
    if union == 0:
        logger.warning("volumetric IoU: both shapes are empty on the samples")
        return 0.0
    return np.count_nonzero(pred_occupied & gt_occupied) / union


def assembly_iou(a: PrimitiveAssembly, points: np.ndarray, labels: np.ndarray) -> float:
    """IoU between {composite >= tau_o} and labeled occupancy samples."""
    return volumetric_iou(composite_scores(a, points) >= a.tau_o, np.asarray(labels) == 1)


def overlap_count(a: PrimitiveAssembly, points: np.ndarray) -> float:
    """1000 x fraction of samples with O_i >= tau_s for more than one primitive."""
    claims = np.count_nonzero(indicator_matrix(a, np.asarray(points, dtype=np.float64).reshape(-1, 3)) >= a.tau_s,
                              axis=0)
    return OVERLAP_SCALE * float(np.mean(claims > 1))


@dataclass(frozen=True)
class CurvatureStats:
    """
    Attributes:
        values (np.ndarray): (V,) angle defect / mixed area, NaN where skipped
        raw_defects (np.ndarray): (V,) 2 pi - sum of incident angles, for every vertex
        mean, std (float): Over non-skipped vertices
        skipped (int): Boundary, non-manifold or isolated vertices
    """
    values: np.ndarray
    raw_defects: np.ndarray
    mean: float
    std: float
    skipped: int


def _corner_angles(tri: np.ndarray) -> np.ndarray:
    angles = np.empty(tri.shape[:2])
    for k in range(3):
        u = tri[:, (k + 1) % 3] - tri[:, k]
        v = tri[:, (k + 2) % 3] - tri[:, k]
        lengths = np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
        cos = np.einsum("fd,fd->f", u, v) / np.where(lengths > 0, lengths, 1.0)
        angles[:, k] = np.arccos(np.clip(cos, -1.0, 1.0))
    return angles


def _mixed_areas(tri: np.ndarray, angles: np.ndarray, faces: np.ndarray, n_vertices: int) -> np.ndarray:
    """Voronoi area for non-obtuse triangles, area/2 or area/4 split for obtuse ones."""
    area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    obtuse = angles > math.pi / 2
    any_obtuse = obtuse.any(axis=1)

    contribution = np.zeros(angles.shape)
    cot = 1.0 / np.tan(np.clip(angles, 1e-12, math.pi - 1e-12))
    for k in range(3):
        # edges adjacent to corner k are opposite corners k+1 and k+2
        e_next = np.sum((tri[:, (k + 1) % 3] - tri[:, k]) ** 2, axis=1)
        e_prev = np.sum((tri[:, (k + 2) % 3] - tri[:, k]) ** 2, axis=1)
        contribution[:, k] = (e_next * cot[:, (k + 2) % 3] + e_prev * cot[:, (k + 1) % 3]) / 8.0
    contribution[any_obtuse] = np.where(obtuse[any_obtuse], area[any_obtuse, None] / 2.0,
                                        area[any_obtuse, None] / 4.0)

    out = np.zeros(n_vertices)
    np.add.at(out, faces.reshape(-1), contribution.reshape(-1))
    return out


def gaussian_curvature(mesh: TriangleMesh) -> CurvatureStats:
    """
    Angle-defect Gaussian curvature per vertex, normalized by the mixed area.

    Vertices on a boundary edge, on an edge with more than two faces, or with no faces are skipped.
    """
    n = mesh.n_vertices
    tri = mesh.triangles()
    angles = _corner_angles(tri)
    angle_sum = np.zeros(n)
    np.add.at(angle_sum, mesh.faces.reshape(-1), angles.reshape(-1))
    raw = 2.0 * math.pi - angle_sum

    skip = np.ones(n, dtype=bool)
    if not mesh.is_empty():
        skip[:] = False
        incident = np.bincount(mesh.faces.reshape(-1), minlength=n)
        skip |= incident == 0
        edges, counts = mesh.edge_face_counts()
        bad = edges[counts != 2].reshape(-1)
        skip[bad] = True
        edge_degree = np.bincount(edges.reshape(-1), minlength=n)
        skip |= edge_degree != incident

    areas = _mixed_areas(tri, angles, mesh.faces, n)
    values = np.full(n, np.nan)
    ok = ~skip & (areas > 0)
    values[ok] = raw[ok] / areas[ok]
    skipped = int(np.count_nonzero(~ok))
    if skipped:
        logger.debug("curvature: skipped %d of %d vertices", skipped, n)

    kept = values[ok]
    return CurvatureStats(
        values=values,
        raw_defects=raw,
        mean=float(kept.mean()) if len(kept) else 0.0,
        std=float(kept.std()) if len(kept) else 0.0,
        skipped=skipped,
    )


def primitive_curvatures(a: PrimitiveAssembly, level: int = 3) -> list[CurvatureStats]:
    """Curvature of each primitive's own (unfiltered) template mesh, without faces on collapsed directions."""
    template = icosphere(level)
    stats = []
    for primitive in a.primitives:
        with no_grad():
            vertices, live = live_surface_points(primitive, template.vertices)
        faces = template.faces[live[template.faces].all(axis=1)]
        stats.append(gaussian_curvature(TriangleMesh(vertices.data, faces)))
    return stats


@dataclass
class LabelTransfer:
    """
    Attributes:
        predicted (np.ndarray): (m,) label per test point
        primitive_labels (np.ndarray): (N,) label adopted by each primitive
        unvoted (list[int]): Primitives without votes, given the most frequent training label
        label_iou (float | None): Mean per-part IoU when test labels are given
    """
    predicted: np.ndarray
    primitive_labels: np.ndarray
    unvoted: list[int] = field(default_factory=list)
    label_iou: Optional[float] = None


def nearest_primitive(a: PrimitiveAssembly, points: np.ndarray) -> np.ndarray:
    """Primitive with the highest O_i; ties go to the primitive whose surface is closest along the ray."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    values = indicator_matrix(a, points)
    with no_grad():
        gap = np.stack([np.abs(signed_distances(p, points)) for p in a.primitives])
    best = values.max(axis=0)
    score = np.where(values == best, -gap, -np.inf)
    return score.argmax(axis=0)


def mean_part_iou(predicted: np.ndarray, truth: np.ndarray) -> float:
    ious = []
    for label in np.union1d(predicted, truth):
        pred_k, true_k = predicted == label, truth == label
        ious.append(np.count_nonzero(pred_k & true_k) / np.count_nonzero(pred_k | true_k))
    return float(np.mean(ious))


def label_transfer(a: PrimitiveAssembly, train_points: np.ndarray, train_labels: np.ndarray,
                   test_points: np.ndarray, test_labels: np.ndarray | None = None) -> LabelTransfer:
    """
    Train points vote their label to their nearest primitive; each primitive adopts its majority label;
    test points inherit the label of their nearest primitive.
    """
    train_labels = np.asarray(train_labels, dtype=np.int64).reshape(-1)
    if len(train_labels) == 0 or len(train_labels) != len(np.asarray(train_points).reshape(-1, 3)):
        raise ValidationError("label transfer needs one label per (non-empty) training point")

    logger.info("label transfer: nearest primitive = highest indicator, ties by surface distance")
    owners = nearest_primitive(a, train_points)
    labels = np.unique(train_labels)
    votes = np.zeros((len(a), len(labels)), dtype=np.int64)
    np.add.at(votes, (owners, np.searchsorted(labels, train_labels)), 1)

    fallback = labels[np.bincount(np.searchsorted(labels, train_labels)).argmax()]
    primitive_labels = labels[votes.argmax(axis=1)]
    unvoted = [int(i) for i in np.flatnonzero(votes.sum(axis=1) == 0)]
    primitive_labels[unvoted] = fallback
    if unvoted:
        logger.warning("primitives %s received no votes; assigned label %d", unvoted, fallback)

    predicted = primitive_labels[nearest_primitive(a, test_points)]
    result = LabelTransfer(predicted=predicted, primitive_labels=primitive_labels, unvoted=unvoted)
    if test_labels is not None:
        result.label_iou = mean_part_iou(predicted, np.asarray(test_labels, dtype=np.int64).reshape(-1))
    return result


@dataclass
class MetricReport:
    """
    Attributes:
        fscore (float): Percent, in [0, 100]
        cd1 (float | None): Chamfer-L1 times the reporting scale, None when the mesh is empty
        cd1_raw (float | None): Unscaled Chamfer-L1
        iou (float): Volumetric IoU in [0, 1]
        overlap (float): Overlap count (x1000)
        curvature_mean, curvature_std (float): Over the assembled explicit mesh
        label_iou (float | None): Mean part IoU of label transfer
        primitive_curvature (list[dict]): Per-primitive mean/std curvature
    """
    fscore: float
    cd1: Optional[float]
    cd1_raw: Optional[float]
    iou: float
    overlap: float
    curvature_mean: float = 0.0
    curvature_std: float = 0.0
    label_iou: Optional[float] = None
    primitive_curvature: list[dict[str, float]] = field(default_factory=list)

    def __post_init__(self):
        """
        :raise ValidationError: If a metric is outside its range
        """
        if not 0.0 <= self.fscore <= 100.0:
            raise ValidationError(f"fscore must be in [0, 100], got {self.fscore}")
        if not 0.0 <= self.iou <= 1.0:
            raise ValidationError(f"iou must be in [0, 1], got {self.iou}")
        if self.overlap < 0:
            raise ValidationError(f"overlap must be >= 0, got {self.overlap}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "fscore": self.fscore,
            "cd1": self.cd1,
            "cd1_raw": self.cd1_raw,
            "iou": self.iou,
            "overlap": self.overlap,
            "curvature_mean": self.curvature_mean,
            "curvature_std": self.curvature_std,
            "label_iou": self.label_iou,
            "primitive_curvature": self.primitive_curvature,
        }

    def as_table(self) -> str:
        rows = [
            ("F-score (%)", f"{self.fscore:.2f}"),
            ("CD1", "n/a" if self.cd1 is None else f"{self.cd1:.4f}"),
            ("CD1 (raw)", "n/a" if self.cd1_raw is None else f"{self.cd1_raw:.5f}"),
            ("IoU", f"{self.iou:.4f}"),
            ("Overlap (x1000)", f"{self.overlap:.3f}"),
            ("Curvature mean", f"{self.curvature_mean:.4f}"),
            ("Curvature std", f"{self.curvature_std:.4f}"),
        ]
        if self.label_iou is not None:
            rows.append(("Label IoU", f"{self.label_iou:.4f}"))
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name.ljust(width)}  {value}" for name, value in rows)


def evaluate(a: PrimitiveAssembly, target: ShapeSample, fscore_threshold: float = 0.01, cd_scale: float = 10.0,
             surface_points_count: int = 100000, overlap_points: int = 100000, icosphere_level: int = 4,
             seed: int = 0) -> MetricReport:
    """Score the explicit mesh of an assembly against a target sample."""
    rng = np.random.default_rng(seed)
    mesh = assemble_mesh(a, icosphere(icosphere_level))
    if mesh.is_empty() or mesh.area() <= 0:
        logger.warning("explicit mesh is empty; F-score is zero and CD1 is undefined")
        predicted = None
    else:
        predicted = sample_surface(mesh, surface_points_count, rng)

    if predicted is None:
        score, cd_raw = 0.0, None
    else:
        score = fscore(predicted, target.surface_points, fscore_threshold)
        cd_raw = chamfer_l1(predicted, target.surface_points)

    curvature = gaussian_curvature(mesh)
    uniform = rng.uniform(-DOMAIN_BOUND, DOMAIN_BOUND, size=(overlap_points, 3))
    label_iou = None
    if target.part_labels is not None:
        half = len(target.surface_points) // 2
        if half:
            transfer = label_transfer(a, target.surface_points[:half], target.part_labels[:half],
                                      target.surface_points[half:], target.part_labels[half:])
            label_iou = transfer.label_iou

    report = MetricReport(
        fscore=score,
        cd1=None if cd_raw is None else cd_raw * cd_scale,
        cd1_raw=cd_raw,
        iou=assembly_iou(a, target.occupancy_points, target.occupancy_labels),
        overlap=overlap_count(a, uniform),
        curvature_mean=curvature.mean,
        curvature_std=curvature.std,
        label_iou=label_iou,
        primitive_curvature=[{"mean": s.mean, "std": s.std} for s in primitive_curvatures(a)],
    )
    logger.info("evaluation: F=%.2f CD1=%s IoU=%.4f overlap=%.3f", report.fscore, report.cd1, report.iou,
                report.overlap)
    return report
