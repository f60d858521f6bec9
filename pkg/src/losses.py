"""
Training objectives: Chamfer surface loss, occupancy BCE, overlap regularizer and their weighted sum.
"""
from __future__ import annotations

import logging
import math
from typing import Any, Mapping

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .assembly import PrimitiveAssembly, primitive_indicators
from .config import LossWeights
from .diff_engine import Tensor, record_branch
from .exceptions import NumericalError, ValidationError

logger = logging.getLogger(__name__)

EMPTY_SURFACE_PENALTY = 10.0
PROBABILITY_CLAMP = 1e-7
BRUTE_FORCE_LIMIT = 4096 * 4096


def nearest_neighbors(queries: np.ndarray, reference: np.ndarray, method: str = "kdtree") -> tuple[np.ndarray, np.ndarray]:
    """
    Nearest reference point for every query.

    :param method: "kdtree" (scipy cKDTree) or "brute" (dense distance matrix, used as the oracle)
    :return: (distances (n,), indices (n,))
    """
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    reference = np.asarray(reference, dtype=np.float64).reshape(-1, 3)
    if len(reference) == 0:
        raise ValidationError("nearest_neighbors needs a non-empty reference set")

    if method == "kdtree":
        distances, indices = cKDTree(reference).query(queries, k=1)
        return np.asarray(distances, dtype=np.float64), np.asarray(indices, dtype=np.int64)
    if method == "brute":
        distances = np.empty(len(queries))
        indices = np.empty(len(queries), dtype=np.int64)
        step = max(1, BRUTE_FORCE_LIMIT // max(1, len(reference)))
        for start in range(0, len(queries), step):
            block = cdist(queries[start:start + step], reference)
            indices[start:start + step] = block.argmin(axis=1)
            distances[start:start + step] = block[np.arange(len(block)), indices[start:start + step]]
        return distances, indices
    raise ValidationError(f"unknown nearest-neighbour method {method!r}")


def surface_loss(predicted: Tensor, target: np.ndarray, method: str = "kdtree") -> Tensor:
    """
    Symmetric Chamfer distance: mean nearest distance from predicted to target plus from target
    to predicted. Gradients reach the predicted points only; assignments are fixed for the step.
    """
    target = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if len(target) == 0:
        raise ValidationError("surface_loss needs a non-empty target set")
    if len(predicted) == 0:
        logger.warning("predicted surface set is empty; using penalty %.1f", EMPTY_SURFACE_PENALTY)
        return Tensor(EMPTY_SURFACE_PENALTY)

    _, to_target = nearest_neighbors(predicted.data, target, method)
    _, to_predicted = nearest_neighbors(target, predicted.data, method)
    record_branch(to_target)
    record_branch(to_predicted)

    forward = (predicted - target[to_target]).norm(axis=1).mean()
    backward = (predicted[to_predicted] - target).norm(axis=1).mean()
    return forward + backward


def occupancy_loss(predicted: Tensor, labels: np.ndarray) -> Tensor:
    """
    Mean binary cross entropy with predictions clamped to [1e-7, 1 - 1e-7].

    :raise ValidationError: If a label is not 0 or 1 or the shapes disagree
    """
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise ValidationError("occupancy labels must be 0 or 1")
    if predicted.shape != labels.shape:
        raise ValidationError(f"{predicted.shape} predictions for {labels.shape} labels")

    p = predicted.clip(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)
    return -(p.log() * labels + (1.0 - p).log() * (1.0 - labels)).mean()


def overlap_regularizer(a: PrimitiveAssembly, points: np.ndarray, tau_r: float) -> Tensor:
    """mean ReLU(sum_i O_i(x) - tau_r) over the sample points."""
    if not tau_r > 0:
        raise ValidationError(f"tau_r must be positive, got {tau_r}")
    return (primitive_indicators(a, points).sum(axis=0) - tau_r).relu().mean()


def total_loss(weights: LossWeights, components: Mapping[str, Any]) -> Tensor:
    """
    w_occupancy * L_O + w_surface * L_S + w_overlap * L_decomp.

    Components are keyed "occupancy", "surface" and "overlap"; a missing component counts as zero.

    :raise NumericalError: If any component is not finite, naming it
    """
    terms = {"occupancy": weights.w_occupancy, "surface": weights.w_surface, "overlap": weights.w_overlap}
    unknown = set(components) - set(terms)
    if unknown:
        raise ValidationError(f"unknown loss components {sorted(unknown)}")

    total: Tensor = Tensor(0.0)
    for name, weight in terms.items():
        value = components.get(name)
        if value is None:
            continue
        value = value if isinstance(value, Tensor) else Tensor(value)
        if not math.isfinite(value.item()):
            raise NumericalError(f"loss component {name!r} is not finite ({value.item()})")
        if weight:
            total = total + value * weight
    return total
