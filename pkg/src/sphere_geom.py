"""
Spherical/Cartesian conversions, direction sampling and icosphere templates.

Angles follow the physics convention: theta is the polar angle measured from +Z in [0, pi],
phi is the azimuth measured from +X in the XY-plane in [-pi, pi].
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np

from .exceptions import ValidationError

logger = logging.getLogger(__name__)

UNIT_TOLERANCE = 1e-12
MAX_ICOSPHERE_LEVEL = 6
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class SphereCoord:
    """
    Point on the unit sphere in angular form

    Attributes:
        theta (float): Polar angle in [0, pi]
        phi (float): Azimuth in [-pi, pi]
        degenerate (bool): True when produced from a zero vector (fallback to the north pole)
    """
    theta: float
    phi: float
    degenerate: bool = field(default=False, compare=False)

    def __post_init__(self):
        """
        :raise ValidationError: If theta or phi is outside its range
        """
        if not 0.0 <= self.theta <= math.pi:
            raise ValidationError(f"theta must be in [0, pi], got {self.theta}")
        if not -math.pi <= self.phi <= math.pi:
            raise ValidationError(f"phi must be in [-pi, pi], got {self.phi}")


@dataclass(frozen=True)
class UnitDirection:
    """
    Point on the unit sphere as a Cartesian 3-vector

    Attributes:
        x, y, z (float): Components, x^2 + y^2 + z^2 = 1
    """
    x: float
    y: float
    z: float

    def __post_init__(self):
        """
        :raise ValidationError: If the vector is not unit length
        """
        norm = math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
        if abs(norm - 1.0) > UNIT_TOLERANCE:
            raise ValidationError(f"direction must have unit norm, got {norm!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


class DirectionScheme(str, Enum):
    UNIFORM_RANDOM = "uniform-random"
    FIBONACCI = "fibonacci"


@dataclass(frozen=True)
class DirectionSet:
    """
    Batch of sphere directions {d_k} stored as parallel angle arrays.

    Iterating yields SphereCoord values; unit_vectors() gives the (k, 3) array omega(d_k).
    """
    theta: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        if self.theta.shape != self.phi.shape or self.theta.ndim != 1:
            raise ValidationError("theta and phi must be 1D arrays of equal length")

    def __len__(self) -> int:
        return int(self.theta.shape[0])

    def __iter__(self) -> Iterator[SphereCoord]:
        for theta, phi in zip(self.theta, self.phi):
            yield SphereCoord(float(theta), float(phi))

    def __getitem__(self, index: int) -> SphereCoord:
        return SphereCoord(float(self.theta[index]), float(self.phi[index]))

    def unit_vectors(self) -> np.ndarray:
        return omega_array(self.theta, self.phi)

    @classmethod
    def from_vectors(cls, vectors: np.ndarray) -> "DirectionSet":
        theta, phi, _ = to_sphere_array(vectors)
        return cls(theta=theta, phi=phi)


@dataclass(frozen=True)
class IcosphereTemplate:
    """
    Subdivided icosahedron projected to the unit sphere

    Attributes:
        level (int): Number of subdivisions
        vertices (np.ndarray): (V, 3) unit vectors, V = 10 * 4^level + 2
        faces (np.ndarray): (F, 3) vertex indices, F = 20 * 4^level, outward winding
    """
    level: int
    vertices: np.ndarray
    faces: np.ndarray

    def directions(self) -> DirectionSet:
        return DirectionSet.from_vectors(self.vertices)

    def edges(self) -> np.ndarray:
        pairs = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        return np.unique(np.sort(pairs, axis=1), axis=0)

    def euler_characteristic(self) -> int:
        return len(self.vertices) - len(self.edges()) + len(self.faces)


def omega(d: SphereCoord) -> UnitDirection:
    """omega(d) = (sin t cos p, sin t sin p, cos t)"""
    sin_theta = math.sin(d.theta)
    return UnitDirection(sin_theta * math.cos(d.phi), sin_theta * math.sin(d.phi), math.cos(d.theta))


def omega_array(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    sin_theta = np.sin(theta)
    return np.stack([sin_theta * np.cos(phi), sin_theta * np.sin(phi), np.cos(theta)], axis=-1)


def to_sphere(x) -> SphereCoord:
    """
    Cartesian point -> direction on the sphere (G).

    Uses the quadrant-aware arctangent so that omega(to_sphere(x)) == x / |x|.
    A zero vector maps to the north pole and is flagged degenerate.
    """
    vec = np.asarray(x, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(vec)):
        raise ValidationError(f"point must be finite, got {vec}")

    rho = math.hypot(vec[0], vec[1])
    if rho == 0.0 and vec[2] == 0.0:
        logger.warning("to_sphere called with a zero vector; using the north pole")
        return SphereCoord(0.0, 0.0, degenerate=True)

    return SphereCoord(math.atan2(rho, vec[2]), math.atan2(vec[1], vec[0]))


def to_sphere_array(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized G for an (n, 3) array: returns (theta, phi, degenerate_mask)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    rho = np.hypot(points[:, 0], points[:, 1])
    theta = np.arctan2(rho, points[:, 2])
    phi = np.arctan2(points[:, 1], points[:, 0])
    degenerate = (rho == 0.0) & (points[:, 2] == 0.0)
    theta[degenerate] = 0.0
    phi[degenerate] = 0.0
    return theta, phi, degenerate


def to_cartesian(r: float, d: SphereCoord) -> np.ndarray:
    """G^-1(r, theta, phi) = r * omega(d)"""
    if r < 0:
        raise ValidationError(f"radius must be non-negative, got {r}")
    return r * omega(d).as_array()


def sample_directions(k: int, scheme: DirectionScheme | str = DirectionScheme.UNIFORM_RANDOM,
                      seed: int | np.random.Generator | None = None) -> DirectionSet:
    """
    Sample k directions on the sphere.

    uniform-random draws i.i.d. from the area measure (z uniform in [-1, 1]);
    fibonacci is the deterministic golden-angle spiral and ignores the seed.

    :raise ValidationError: If k < 1 or the scheme is unknown
    """
    if k < 1:
        raise ValidationError(f"direction count must be >= 1, got {k}")
    try:
        scheme = DirectionScheme(scheme)
    except ValueError:
        raise ValidationError(f"unknown direction scheme {scheme!r}") from None

    if scheme is DirectionScheme.FIBONACCI:
        index = np.arange(k, dtype=np.float64)
        z = 1.0 - 2.0 * (index + 0.5) / k
        phi = np.angle(np.exp(1j * GOLDEN_ANGLE * index))
    else:
        rng = np.random.default_rng(seed)
        z = rng.uniform(-1.0, 1.0, size=k)
        phi = rng.uniform(-math.pi, math.pi, size=k)

    return DirectionSet(theta=np.arccos(np.clip(z, -1.0, 1.0)), phi=phi)


def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    r = (1.0 + math.sqrt(5.0)) / 2.0
    coords = np.array([
        [-1.0, r, 0.0], [1.0, r, 0.0], [-1.0, -r, 0.0], [1.0, -r, 0.0],
        [0.0, -1.0, r], [0.0, 1.0, r], [0.0, -1.0, -r], [0.0, 1.0, -r],
        [r, 0.0, -1.0], [r, 0.0, 1.0], [-r, 0.0, -1.0], [-r, 0.0, 1.0],
    ])
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return coords / np.linalg.norm(coords, axis=1, keepdims=True), faces


def _subdivide(vertices: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split every triangle into four, pushing the new edge midpoints to the unit sphere."""
    pairs = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    edges, inverse = np.unique(np.sort(pairs, axis=1), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)

    midpoints = vertices[edges[:, 0]] + vertices[edges[:, 1]]
    midpoints /= np.linalg.norm(midpoints, axis=1, keepdims=True)

    n_faces = len(faces)
    ab = inverse[:n_faces] + len(vertices)
    bc = inverse[n_faces:2 * n_faces] + len(vertices)
    ca = inverse[2 * n_faces:] + len(vertices)
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]

    new_faces = np.concatenate([
        np.stack([a, ab, ca], axis=1),
        np.stack([b, bc, ab], axis=1),
        np.stack([c, ca, bc], axis=1),
        np.stack([ab, bc, ca], axis=1),
    ])
    return np.concatenate([vertices, midpoints]), new_faces


def icosphere(level: int) -> IcosphereTemplate:
    """
    Build the icosphere mesh template used for explicit meshing.

    :raise ValidationError: If level is outside [0, MAX_ICOSPHERE_LEVEL]
    """
    if not 0 <= level <= MAX_ICOSPHERE_LEVEL:
        raise ValidationError(f"icosphere level must be in [0, {MAX_ICOSPHERE_LEVEL}], got {level}")

    vertices, faces = _icosahedron()
    for _ in range(level):
        vertices, faces = _subdivide(vertices, faces)

    return IcosphereTemplate(level=level, vertices=vertices, faces=faces)
