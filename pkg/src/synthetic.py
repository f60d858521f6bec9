"""
Analytic target shapes: unions of spheres and axis-aligned boxes with exact inside tests,
watertight meshes and per-part labels.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .exceptions import ValidationError
from .shape_io import DOMAIN_BOUND, NormalizationTransform, ShapeSample, TriangleMesh, sample_occupancy_points
from .sphere_geom import icosphere

logger = logging.getLogger(__name__)

MESH_LEVEL = 4


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValidationError(f"sphere radius must be positive, got {self.radius}")

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(points - np.asarray(self.center), axis=1) < self.radius

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(points - np.asarray(self.center), axis=1) - self.radius

    def area(self) -> float:
        return 4.0 * np.pi * self.radius ** 2

    def volume(self) -> float:
        return 4.0 / 3.0 * np.pi * self.radius ** 3

    def sample_surface(self, count: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.normal(size=(count, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return np.asarray(self.center) + self.radius * u

    def mesh(self, level: int = MESH_LEVEL) -> TriangleMesh:
        template = icosphere(level)
        return TriangleMesh(np.asarray(self.center) + self.radius * template.vertices, template.faces)


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    half_extents: tuple[float, float, float]

    def __post_init__(self):
        if min(self.half_extents) <= 0:
            raise ValidationError(f"box half extents must be positive, got {self.half_extents}")

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.all(np.abs(points - np.asarray(self.center)) < np.asarray(self.half_extents), axis=1)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        q = np.abs(points - np.asarray(self.center)) - np.asarray(self.half_extents)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        return outside + np.minimum(q.max(axis=1), 0.0)

    def _face_areas(self) -> np.ndarray:
        hx, hy, hz = self.half_extents
        return np.array([hy * hz, hx * hz, hx * hy]) * 4.0

    def area(self) -> float:
        return float(2.0 * self._face_areas().sum())

    def volume(self) -> float:
        return float(8.0 * np.prod(self.half_extents))

    def sample_surface(self, count: int, rng: np.random.Generator) -> np.ndarray:
        weights = np.repeat(self._face_areas(), 2)
        face = rng.choice(6, size=count, p=weights / weights.sum())
        axis, sign = face // 2, np.where(face % 2 == 0, -1.0, 1.0)
        half = np.asarray(self.half_extents)
        points = rng.uniform(-1.0, 1.0, size=(count, 3)) * half
        points[np.arange(count), axis] = sign * half[axis]
        return np.asarray(self.center) + points

    def mesh(self) -> TriangleMesh:
        corners = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=np.float64)
        faces = np.array([
            [0, 1, 3], [0, 3, 2],  # -x
            [4, 6, 7], [4, 7, 5],  # +x
            [0, 4, 5], [0, 5, 1],  # -y
            [2, 3, 7], [2, 7, 6],  # +y
            [0, 2, 6], [0, 6, 4],  # -z
            [1, 5, 7], [1, 7, 3],  # +z
        ], dtype=np.int64)
        return TriangleMesh(np.asarray(self.center) + corners * np.asarray(self.half_extents), faces)


Solid = Union[Sphere, Box]


@dataclass(frozen=True)
class SyntheticShape:
    """
    Union of solids; part k of the shape is solids[k]

    Attributes:
        name (str): Identifier used in reports
        solids (tuple[Solid, ...]): Parts; when they overlap, surface samples buried in another part are discarded
        part_names (tuple[str, ...]): Optional human-readable part names
    """
    name: str
    solids: tuple[Solid, ...]
    part_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.solids:
            raise ValidationError("a synthetic shape needs at least one solid")

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.any([s.contains(points) for s in self.solids], axis=0)

    def labels(self, points: np.ndarray) -> np.ndarray:
        return self.contains(points).astype(np.int8)

    def sample_surface(self, count: int, seed: int | np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
        """
        Area-weighted samples on the union boundary.

        :return: (points (count, 3), part index per point)
        """
        rng = np.random.default_rng(seed)
        areas = np.array([s.area() for s in self.solids])
        points = np.zeros((0, 3))
        parts = np.zeros(0, dtype=np.int64)
        while len(points) < count:
            batch = 2 * (count - len(points)) + 16
            part = rng.choice(len(self.solids), size=batch, p=areas / areas.sum())
            candidates = np.zeros((batch, 3))
            for k, solid in enumerate(self.solids):
                rows = np.flatnonzero(part == k)
                candidates[rows] = solid.sample_surface(len(rows), rng)
            exposed = np.ones(batch, dtype=bool)
            for k, solid in enumerate(self.solids):
                exposed &= ~((part != k) & solid.contains(candidates))
            points = np.concatenate([points, candidates[exposed]])
            parts = np.concatenate([parts, part[exposed]])
        return points[:count], parts[:count]

    def meshes(self) -> list[TriangleMesh]:
        return [s.mesh() for s in self.solids]

    def to_shape_sample(self, surface_count: int, occupancy_count: int, seed: int = 0,
                        near_surface_fraction: float = 0.0) -> ShapeSample:
        rng = np.random.default_rng(seed)
        surface, parts = self.sample_surface(surface_count, rng)
        occupancy = sample_occupancy_points(occupancy_count, rng, near_surface_fraction, surface)
        return ShapeSample(surface, occupancy, self.labels(occupancy), NormalizationTransform.identity(), parts)

    def volume_fraction(self, count: int = 200000, seed: int = 0) -> float:
        """Monte Carlo estimate of the occupied fraction of the normalized cube."""
        rng = np.random.default_rng(seed)
        return float(self.contains(rng.uniform(-DOMAIN_BOUND, DOMAIN_BOUND, size=(count, 3))).mean())


def unit_sphere() -> SyntheticShape:
    return SyntheticShape("unit_sphere", (Sphere((0.0, 0.0, 0.0), 0.5),))


def two_disjoint_spheres() -> SyntheticShape:
    return SyntheticShape("two_disjoint_spheres",
                          (Sphere((-0.25, 0.0, 0.0), 0.2), Sphere((0.25, 0.0, 0.0), 0.2)), ("left", "right"))


def two_overlapping_spheres() -> SyntheticShape:
    return SyntheticShape("two_overlapping_spheres",
                          (Sphere((-0.15, 0.0, 0.0), 0.25), Sphere((0.15, 0.0, 0.0), 0.25)), ("left", "right"))


def axis_box(half_extents: Sequence[float] = (0.5, 0.35, 0.25)) -> SyntheticShape:
    return SyntheticShape("axis_box", (Box((0.0, 0.0, 0.0), tuple(half_extents)),))


def stacked_lamp() -> SyntheticShape:
    """Three stacked parts: flat base, thin pole, round shade."""
    return SyntheticShape(
        "stacked_lamp",
        (
            Box((0.0, 0.0, -0.4), (0.25, 0.25, 0.05)),
            Box((0.0, 0.0, -0.1), (0.04, 0.04, 0.25)),
            Sphere((0.0, 0.0, 0.3), 0.2),
        ),
        ("base", "pole", "shade"),
    )


SHAPES = {
    "unit_sphere": unit_sphere,
    "two_disjoint_spheres": two_disjoint_spheres,
    "two_overlapping_spheres": two_overlapping_spheres,
    "axis_box": axis_box,
    "stacked_lamp": stacked_lamp,
}


def get_shape(name: str) -> SyntheticShape:
    try:
        return SHAPES[name]()
    except KeyError:
        raise ValidationError(f"unknown synthetic shape {name!r}; choose from {sorted(SHAPES)}") from None
