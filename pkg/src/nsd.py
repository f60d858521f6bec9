"""
Star-domain primitive: radius function, implicit indicator, explicit surface points and normals.

The radius over sphere directions is r+(d) = ReLU(f(omega(d))) for a small MLP f. A point x is
expressed in the primitive frame as x_bar = x - t and its direction is x_bar / |x_bar|.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .diff_engine import MlpParams, Tensor, DEFAULT_LAYER_SIZES, mlp_forward, parameter
from .exceptions import DegenerateGeometryError, ValidationError
from .sphere_geom import SphereCoord, omega_array

logger = logging.getLogger(__name__)

RADIUS_FLOOR = 1e-8
COLLAPSED_LOGIT = -50.0
NORMAL_GRADIENT_FLOOR = 1e-12
_NORTH_POLE = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class IndicatorConfig:
    """
    Attributes:
        alpha (float): Sharpness of the sigmoid indicator
    """
    alpha: float = 100.0

    def __post_init__(self):
        """
        :raise ValidationError: If alpha is not positive
        """
        if not self.alpha > 0:
            raise ValidationError(f"alpha must be positive, got {self.alpha}")


@dataclass
class NsdPrimitive:
    """
    One star-domain primitive

    Attributes:
        mlp (MlpParams): Radius network
        translation (Tensor): Center t_i, shape (3,)
        index (int): Position of the primitive in its assembly
    """
    mlp: MlpParams
    translation: Tensor
    index: int = 0

    def __post_init__(self):
        """
        :raise ValidationError: If the translation is not a finite 3-vector or the index is negative
        """
        if not isinstance(self.translation, Tensor):
            self.translation = parameter(self.translation)
        if self.translation.shape != (3,) or not np.all(np.isfinite(self.translation.data)):
            raise ValidationError(f"translation must be a finite 3-vector, got {self.translation.data}")
        if self.index < 0:
            raise ValidationError(f"primitive index must be >= 0, got {self.index}")

    def parameters(self) -> list[Tensor]:
        return self.mlp.parameters() + [self.translation]

    def detached(self) -> "NsdPrimitive":
        return NsdPrimitive(self.mlp.detached(), self.translation.detach(), self.index)

    @classmethod
    def initialize(cls, rng: np.random.Generator, translation: Sequence[float], index: int = 0,
                   layer_sizes: Sequence[int] = DEFAULT_LAYER_SIZES) -> "NsdPrimitive":
        return cls(MlpParams.initialize(rng, layer_sizes), parameter(translation), index)

    @classmethod
    def sphere(cls, radius: float, translation: Sequence[float] = (0.0, 0.0, 0.0), index: int = 0,
               layer_sizes: Sequence[int] = DEFAULT_LAYER_SIZES) -> "NsdPrimitive":
        """Primitive with a constant radius (an exact sphere)."""
        return cls(MlpParams.constant(radius, layer_sizes), parameter(translation), index)

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "translation": self.translation.data.tolist(),
            **self.mlp.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "NsdPrimitive":
        return cls(
            mlp=MlpParams.from_dict(data),
            translation=parameter(data["translation"]),
            index=int(data["index"]),
        )


def _points(x: Any) -> Tensor:
    x = x if isinstance(x, Tensor) else Tensor(x)
    return x.reshape(-1, 3)


def _frame(p: NsdPrimitive, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """x_bar, |x_bar| and the unit direction of x_bar (north pole at the center)."""
    x_bar = x - p.translation
    dist = x_bar.norm(axis=1)
    at_center = dist.data == 0.0
    unit = x_bar / dist.clamp_min(RADIUS_FLOOR * RADIUS_FLOOR).reshape(-1, 1)
    if np.any(at_center):
        unit = unit + np.where(at_center[:, None], _NORTH_POLE, 0.0)
    return x_bar, dist, unit


def radii(p: NsdPrimitive, unit_vectors: Any) -> Tensor:
    """r+ at each row of an (n, 3) array of unit directions."""
    return mlp_forward(p.mlp, _points(unit_vectors)).relu()


def radius(p: NsdPrimitive, d: SphereCoord) -> Tensor:
    return radii(p, omega_array(d.theta, d.phi))[0]


def indicators(p: NsdPrimitive, cfg: IndicatorConfig, x: Any) -> Tensor:
    """
    sigmoid(alpha * (1 - |x_bar| / r+)) for each row of x.

    Where r+ <= RADIUS_FLOOR the primitive has collapsed and the logit is pinned to COLLAPSED_LOGIT.
    """
    _, dist, unit = _frame(p, _points(x))
    r = radii(p, unit)
    collapsed = r.data <= RADIUS_FLOOR
    safe_r = r.masked_fill(collapsed, 1.0)
    logit = (1.0 - dist / safe_r) * cfg.alpha
    return logit.masked_fill(collapsed, COLLAPSED_LOGIT).sigmoid()


def indicator(p: NsdPrimitive, cfg: IndicatorConfig, x: Any) -> Tensor:
    return indicators(p, cfg, x)[0]


def surface_points(p: NsdPrimitive, unit_vectors: Any) -> Tensor:
    """P_i(d) = r+(d) * omega(d) + t_i for each row of an (k, 3) direction array."""
    return live_surface_points(p, unit_vectors)[0]


def live_surface_points(p: NsdPrimitive, unit_vectors: Any) -> tuple[Tensor, np.ndarray]:
    """
    Surface points together with a mask of the directions whose radius has not collapsed.

    A collapsed direction (r+ <= RADIUS_FLOOR) maps to t_i itself, which lies inside the primitive
    whenever any other direction is alive, so it is not a boundary point.
    """
    u = _points(unit_vectors)
    r = radii(p, u)
    return r.reshape(-1, 1) * u + p.translation, r.data > RADIUS_FLOOR


def surface_point(p: NsdPrimitive, d: SphereCoord) -> Tensor:
    return surface_points(p, omega_array(d.theta, d.phi))[0]


def signed_distances(p: NsdPrimitive, x: Any) -> np.ndarray:
    """|x_bar| - r+ along the ray through x (negative inside)."""
    _, dist, unit = _frame(p, _points(x))
    return dist.data - radii(p, unit).data


def signed_distance(p: NsdPrimitive, x: Any) -> float:
    return float(signed_distances(p, x)[0])


def normals(p: NsdPrimitive, cfg: IndicatorConfig, x: Any) -> tuple[np.ndarray, np.ndarray]:
    """
    Unit normals -grad_x O_i / |grad_x O_i| for each row of x.

    :return: (normals (n, 3), valid mask); rows whose gradient norm is below NORMAL_GRADIENT_FLOOR are
             left as zeros and marked invalid
    """
    fixed = p.detached()
    query = Tensor(np.array(_points(x).data, copy=True), requires_grad=True)
    # rows are independent, so the gradient of the sum is the per-row gradient
    indicators(fixed, cfg, query).sum().backward()

    grad = query.grad if query.grad is not None else np.zeros_like(query.data)
    norm = np.linalg.norm(grad, axis=1)
    valid = norm >= NORMAL_GRADIENT_FLOOR
    out = np.zeros_like(grad)
    out[valid] = -grad[valid] / norm[valid, None]
    return out, valid


def normal(p: NsdPrimitive, cfg: IndicatorConfig, x: Any) -> np.ndarray:
    """
    :raise DegenerateGeometryError: If the indicator is flat at x
    """
    out, valid = normals(p, cfg, x)
    if not valid[0]:
        raise DegenerateGeometryError(f"indicator gradient vanishes at {np.asarray(x).reshape(-1)}")
    return out[0]
