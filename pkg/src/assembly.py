"""
Composition of N star-domain primitives.

The composite indicator is a soft union sigmoid(sum_i O_i). The collective surface keeps a primitive's
explicit point only when no other primitive claims it (O_j < tau_s for every j != i); the explicit mesh
applies the same test to icosphere template vertices.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from skimage import measure

from .diff_engine import Tensor, concatenate, no_grad, record_branch
from .exceptions import ValidationError
from .nsd import IndicatorConfig, NsdPrimitive, indicators, live_surface_points, normals
from .shape_io import DOMAIN_BOUND, TriangleMesh
from .sphere_geom import DirectionSet, IcosphereTemplate

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MC_RESOLUTIONS = (32, 64, 128)
GRID_CHUNK = 65536


@dataclass
class PrimitiveAssembly:
    """
    Attributes:
        primitives (list[NsdPrimitive]): N primitives, primitives[i].index == i
        cfg (IndicatorConfig): Indicator sharpness shared by all primitives
        tau_o (float): Iso-level of the composite indicator, in (0.5, 1)
        tau_s (float): Threshold above which a point counts as interior to another primitive, in (0, 1)
    """
    primitives: list[NsdPrimitive]
    cfg: IndicatorConfig = field(default_factory=IndicatorConfig)
    tau_o: float = 0.99
    tau_s: float = 0.1

    def __post_init__(self):
        """
        :raise ValidationError: If there are no primitives, indices are out of order or thresholds are out of range
        """
        if not self.primitives:
            raise ValidationError("an assembly needs at least one primitive")
        for position, primitive in enumerate(self.primitives):
            if primitive.index != position:
                raise ValidationError(f"primitive at position {position} has index {primitive.index}")
        if not 0.5 < self.tau_o < 1.0:
            raise ValidationError(f"tau_o must be in (0.5, 1), got {self.tau_o}")
        if not 0.0 < self.tau_s < 1.0:
            raise ValidationError(f"tau_s must be in (0, 1), got {self.tau_s}")

    def __len__(self) -> int:
        return len(self.primitives)

    def parameters(self) -> list[Tensor]:
        return [p for primitive in self.primitives for p in primitive.parameters()]

    def translations(self) -> np.ndarray:
        return np.stack([p.translation.data for p in self.primitives])

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "layer_sizes": list(self.primitives[0].mlp.layer_sizes),
            "alpha": self.cfg.alpha,
            "tau_o": self.tau_o,
            "tau_s": self.tau_s,
            "primitives": [p.to_dict() for p in self.primitives],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PrimitiveAssembly":
        if data.get("format_version") != FORMAT_VERSION:
            raise ValidationError(f"unsupported checkpoint format {data.get('format_version')!r}")
        return cls(
            primitives=[NsdPrimitive.from_dict(p) for p in data["primitives"]],
            cfg=IndicatorConfig(alpha=float(data["alpha"])),
            tau_o=float(data["tau_o"]),
            tau_s=float(data["tau_s"]),
        )


@dataclass
class SurfaceSampleSet:
    """
    Collective surface points P_hat

    Attributes:
        points (Tensor): (m, 3) kept surface points, connected to the parameters of their owners
        owner (np.ndarray): (m,) owning primitive index per point
        directions (DirectionSet): Originating direction per point
        degenerate (bool): True when no point survived the filter
    """
    points: Tensor
    owner: np.ndarray
    directions: DirectionSet
    degenerate: bool = False

    def __len__(self) -> int:
        return len(self.owner)


def primitive_indicators(a: PrimitiveAssembly, x: Any) -> Tensor:
    """(N, n) matrix of O_i at each row of x."""
    rows = [indicators(p, a.cfg, x).reshape(1, -1) for p in a.primitives]
    return concatenate(rows, axis=0)


def indicator_sum(a: PrimitiveAssembly, x: Any) -> Tensor:
    return primitive_indicators(a, x).sum(axis=0)


def composite_indicators(a: PrimitiveAssembly, x: Any) -> Tensor:
    return indicator_sum(a, x).sigmoid()


def composite_indicator(a: PrimitiveAssembly, x: Any) -> Tensor:
    return composite_indicators(a, x)[0]


def indicator_matrix(a: PrimitiveAssembly, points: np.ndarray) -> np.ndarray:
    """(N, n) indicator matrix without recording a graph."""
    out = np.empty((len(a), len(points)))
    with no_grad():
        for start in range(0, len(points), GRID_CHUNK):
            out[:, start:start + GRID_CHUNK] = primitive_indicators(a, points[start:start + GRID_CHUNK]).data
    return out


def claimed_by_others(a: PrimitiveAssembly, owner: int, points: np.ndarray) -> np.ndarray:
    """max_{j != owner} O_j at each point (zeros for a single primitive)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    worst = np.zeros(len(points))
    if len(points) == 0:
        return worst
    with no_grad():
        for j, other in enumerate(a.primitives):
            if j != owner:
                worst = np.maximum(worst, indicators(other, a.cfg, points).data)
    return worst


def extract_surface(a: PrimitiveAssembly, dirs: DirectionSet, surface_filter: bool = True) -> SurfaceSampleSet:
    """
    Explicit surface points of every primitive, keeping those no other primitive claims.

    Directions whose radius collapsed are always dropped. With surface_filter=False the plain union of
    the remaining explicit points is returned.
    """
    if len(dirs) == 0:
        raise ValidationError("extract_surface needs at least one direction")

    unit = dirs.unit_vectors()
    pieces, owners, kept_directions = [], [], []
    for i, primitive in enumerate(a.primitives):
        points, keep = live_surface_points(primitive, unit)
        if surface_filter and len(a) > 1:
            keep = keep & (claimed_by_others(a, i, points.data) < a.tau_s)
        record_branch(keep)
        index = np.flatnonzero(keep)
        points = points[index]
        pieces.append(points)
        owners.append(np.full(len(index), i, dtype=np.int64))
        kept_directions.append(index)

    direction_index = np.concatenate(kept_directions)
    result = SurfaceSampleSet(
        points=concatenate(pieces, axis=0),
        owner=np.concatenate(owners),
        directions=DirectionSet(theta=dirs.theta[direction_index], phi=dirs.phi[direction_index]),
    )
    if len(result) == 0:
        result.degenerate = True
        logger.warning("surface extraction kept no points (%d primitives, %d directions)", len(a), len(dirs))
    return result


def collective_normals(a: PrimitiveAssembly, s: SurfaceSampleSet) -> tuple[np.ndarray, np.ndarray]:
    """
    Unit normal of every kept point from its owner's indicator gradient.

    :return: (normals (m, 3), valid mask (m,)); flat-gradient points are zero rows marked invalid
    """
    out = np.zeros((len(s), 3))
    valid = np.zeros(len(s), dtype=bool)
    points = s.points.data
    for i, primitive in enumerate(a.primitives):
        rows = np.flatnonzero(s.owner == i)
        if len(rows):
            out[rows], valid[rows] = normals(primitive, a.cfg, points[rows])

    dropped = int(np.count_nonzero(~valid))
    if dropped:
        logger.warning("dropped %d of %d points with a flat indicator gradient", dropped, len(s))
    return out, valid


def assemble_mesh(a: PrimitiveAssembly, template: IcosphereTemplate) -> TriangleMesh:
    """
    Explicit mesh: each primitive deforms the icosphere template; a face is dropped only when all
    three of its vertices are interior to some other primitive, or when any vertex sits on a collapsed
    direction. Unused vertices are removed.
    """
    vertex_blocks, face_blocks, owner_blocks = [], [], []
    offset = 0
    for i, primitive in enumerate(a.primitives):
        with no_grad():
            points, live = live_surface_points(primitive, template.vertices)
        vertices = points.data
        interior = claimed_by_others(a, i, vertices) >= a.tau_s
        dropped = interior[template.faces].all(axis=1) | ~live[template.faces].all(axis=1)
        faces = template.faces[~dropped]

        used, remap = np.unique(faces, return_inverse=True)
        vertex_blocks.append(vertices[used])
        face_blocks.append(remap.reshape(-1, 3) + offset)
        owner_blocks.append(np.full(len(used), i, dtype=np.int64))
        offset += len(used)

    mesh = TriangleMesh(np.concatenate(vertex_blocks), np.concatenate(face_blocks), np.concatenate(owner_blocks))
    logger.debug("explicit mesh: %d vertices, %d faces", mesh.n_vertices, mesh.n_faces)
    return mesh


def sample_grid(resolution: int, bound: float = DOMAIN_BOUND) -> tuple[np.ndarray, float]:
    """Regular grid points (resolution^3, 3) in ij order and the grid spacing."""
    axis = np.linspace(-bound, bound, resolution)
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    return grid, float(axis[1] - axis[0])


def composite_volume(a: PrimitiveAssembly, grid_resolution: int) -> tuple[np.ndarray, float]:
    """
    Composite indicator sampled on a regular grid over the normalized cube.

    :return: (volume of shape (R, R, R), grid spacing)
    :raise ValidationError: If the resolution is not one of MC_RESOLUTIONS
    """
    if grid_resolution not in MC_RESOLUTIONS:
        raise ValidationError(f"grid resolution must be one of {MC_RESOLUTIONS}, got {grid_resolution}")
    grid, spacing = sample_grid(grid_resolution)
    return composite_scores(a, grid).reshape((grid_resolution,) * 3), spacing


def mesh_from_volume(volume: np.ndarray, spacing: float, iso: float) -> TriangleMesh:
    """Marching cubes at `iso`; an empty or failed extraction gives an empty mesh and a warning."""
    field_values = volume - iso
    if field_values.max() <= 0.0 or field_values.min() >= 0.0:
        logger.warning("composite indicator never crosses %.4f; returning an empty mesh", iso)
        return TriangleMesh.empty()
    try:
        vertices, faces, _, _ = measure.marching_cubes(field_values, level=0.0, spacing=(spacing,) * 3)
    except (ValueError, RuntimeError) as e:
        logger.warning("marching cubes failed (%s); returning an empty mesh", e)
        return TriangleMesh.empty()

    mesh, _ = TriangleMesh(vertices - DOMAIN_BOUND, faces).without_degenerate_faces()
    return mesh


def marching_cubes(a: PrimitiveAssembly, grid_resolution: int, iso: float | None = None) -> TriangleMesh:
    """
    Implicit baseline: marching cubes on composite_indicator - iso (default tau_o) over the normalized cube.

    :raise ValidationError: If the resolution is not one of MC_RESOLUTIONS
    """
    volume, spacing = composite_volume(a, grid_resolution)
    mesh = mesh_from_volume(volume, spacing, a.tau_o if iso is None else iso)
    logger.debug("marching cubes %d^3: %d vertices, %d faces", grid_resolution, mesh.n_vertices, mesh.n_faces)
    return mesh


def composite_scores(a: PrimitiveAssembly, points: Sequence[Sequence[float]] | np.ndarray) -> np.ndarray:
    """Composite indicator values at many points, no graph."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    logits = indicator_matrix(a, points).sum(axis=0)
    return 0.5 * (1.0 + np.tanh(0.5 * logits))
