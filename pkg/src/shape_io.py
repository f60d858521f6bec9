"""
Target-shape ingestion: OBJ meshes, normalization, surface/occupancy sampling and the CSV data files.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .exceptions import DataIntegrityError, MeshFormatError, NotFoundError, ValidationError
from .utils import array_sha256, read_csv, write_csv, write_text

logger = logging.getLogger(__name__)

DOMAIN_BOUND = 0.55
DEGENERATE_AREA = 1e-18
RAY_COUNT = 3
PAIRS_PER_CHUNK = 1 << 21
SURFACE_FILE = "surface.csv"
OCCUPANCY_FILE = "occupancy.csv"
_IGNORED_RECORDS = {"vn", "vt", "vp", "o", "g", "s", "l", "mtllib", "usemtl"}


@dataclass
class TriangleMesh:
    """
    Indexed triangle mesh

    Attributes:
        vertices (np.ndarray): (V, 3) float coordinates
        faces (np.ndarray): (F, 3) vertex indices, counter-clockwise seen from outside
        owners (np.ndarray | None): Optional (V,) primitive index per vertex
    """
    vertices: np.ndarray
    faces: np.ndarray
    owners: np.ndarray | None = None

    def __post_init__(self):
        """
        :raise ValidationError: If arrays are misshaped, coordinates are not finite or indices dangle
        """
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(self.vertices)):
            raise ValidationError("mesh vertices must be finite")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ValidationError(f"face indices must lie in [0, {len(self.vertices)})")
        if self.owners is not None:
            self.owners = np.asarray(self.owners, dtype=np.int64).reshape(-1)
            if self.owners.shape != (len(self.vertices),):
                raise ValidationError("owners must hold one primitive index per vertex")

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def is_empty(self) -> bool:
        return self.n_faces == 0

    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    def face_areas(self) -> np.ndarray:
        tri = self.triangles()
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def area(self) -> float:
        return float(self.face_areas().sum())

    def edge_face_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """Undirected edges (sorted index pairs) and how many faces use each."""
        pairs = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        return np.unique(np.sort(pairs, axis=1), axis=0, return_counts=True)

    def boundary_edge_count(self) -> int:
        """Edges not shared by exactly two faces."""
        if self.is_empty():
            return 0
        _, counts = self.edge_face_counts()
        return int(np.count_nonzero(counts != 2))

    def is_watertight(self) -> bool:
        return not self.is_empty() and self.boundary_edge_count() == 0

    def without_degenerate_faces(self) -> tuple["TriangleMesh", int]:
        keep = self.face_areas() > DEGENERATE_AREA
        return TriangleMesh(self.vertices, self.faces[keep], self.owners), int(np.count_nonzero(~keep))


@dataclass(frozen=True)
class NormalizationTransform:
    """
    x_normalized = (x - center) * scale

    Attributes:
        center (np.ndarray): Bounding-box center in model units
        scale (float): 1 / longest bounding-box side
    """
    center: np.ndarray
    scale: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) * self.scale

    def invert(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) / self.scale + self.center

    def to_dict(self) -> dict[str, Any]:
        return {"center": self.center.tolist(), "scale": self.scale}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "NormalizationTransform":
        return cls(center=np.asarray(data["center"], dtype=np.float64), scale=float(data["scale"]))

    @classmethod
    def identity(cls) -> "NormalizationTransform":
        return cls(center=np.zeros(3), scale=1.0)


@dataclass
class ShapeSample:
    """
    Target shape: surface point set P and labeled occupancy samples of O

    Attributes:
        surface_points (np.ndarray): (n, 3) points on the surface
        occupancy_points (np.ndarray): (m, 3) points in the normalized cube
        occupancy_labels (np.ndarray): (m,) labels in {0, 1}
        transform (NormalizationTransform): Mapping from model units to the normalized cube
        part_labels (np.ndarray | None): Optional (n,) integer part label per surface point
    """
    surface_points: np.ndarray
    occupancy_points: np.ndarray
    occupancy_labels: np.ndarray
    transform: NormalizationTransform = field(default_factory=NormalizationTransform.identity)
    part_labels: np.ndarray | None = None

    def __post_init__(self):
        """
        :raise ValidationError: If labels are not binary, counts disagree or points leave the cube
        """
        self.surface_points = np.asarray(self.surface_points, dtype=np.float64).reshape(-1, 3)
        self.occupancy_points = np.asarray(self.occupancy_points, dtype=np.float64).reshape(-1, 3)
        labels = np.asarray(self.occupancy_labels)
        if labels.shape != (len(self.occupancy_points),):
            raise ValidationError(f"{len(self.occupancy_points)} occupancy points but labels of shape {labels.shape}")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValidationError("occupancy labels must be 0 or 1")
        self.occupancy_labels = labels.astype(np.int8)
        for name, pts in (("surface", self.surface_points), ("occupancy", self.occupancy_points)):
            if not np.all(np.isfinite(pts)) or (pts.size and np.abs(pts).max() > DOMAIN_BOUND + 1e-9):
                raise ValidationError(f"{name} points must be finite and inside [-{DOMAIN_BOUND}, {DOMAIN_BOUND}]^3")
        if self.part_labels is not None:
            self.part_labels = np.asarray(self.part_labels, dtype=np.int64).reshape(-1)
            if self.part_labels.shape != (len(self.surface_points),):
                raise ValidationError("part labels must hold one entry per surface point")

    def fingerprint(self) -> str:
        """SHA-256 over the sample arrays; part labels are included when present."""
        arrays = [self.surface_points, self.occupancy_points, self.occupancy_labels]
        if self.part_labels is not None:
            arrays.append(self.part_labels)
        return array_sha256(*arrays)

    def split_surface(self, fraction: float, rng: np.random.Generator) -> tuple["ShapeSample", "ShapeSample"]:
        """
        Random split of the surface points into (training, validation) samples sharing the occupancy data.

        :raise ValidationError: If either side would be empty
        """
        n_validation = int(round(fraction * len(self.surface_points)))
        if not 0 < n_validation < len(self.surface_points):
            raise ValidationError(f"cannot hold out {fraction:g} of {len(self.surface_points)} surface points")
        order = rng.permutation(len(self.surface_points))

        def take(rows: np.ndarray) -> "ShapeSample":
            parts = None if self.part_labels is None else self.part_labels[rows]
            return ShapeSample(self.surface_points[rows], self.occupancy_points, self.occupancy_labels, self.transform,
                               parts)

        return take(order[n_validation:]), take(order[:n_validation])

    def save(self, directory: Path) -> tuple[Path, Path]:
        directory.mkdir(parents=True, exist_ok=True)
        surface_path, occupancy_path = directory / SURFACE_FILE, directory / OCCUPANCY_FILE
        if self.part_labels is None:
            write_csv(surface_path, ["x", "y", "z"], self.surface_points)
        else:
            write_csv(surface_path, ["x", "y", "z", "part"],
                      np.column_stack([self.surface_points, self.part_labels]))
        write_csv(occupancy_path, ["x", "y", "z", "label"],
                  np.column_stack([self.occupancy_points, self.occupancy_labels]))
        return surface_path, occupancy_path

    @classmethod
    def load(cls, directory: Path) -> "ShapeSample":
        """
        :raise NotFoundError: If either CSV file is missing
        """
        surface_path, occupancy_path = directory / SURFACE_FILE, directory / OCCUPANCY_FILE
        for path in (surface_path, occupancy_path):
            if not path.exists():
                raise NotFoundError(f"{path} not found")
        surface_header, surface = read_csv(surface_path)
        _, occupancy = read_csv(occupancy_path)
        part_labels = surface[:, 3].astype(np.int64) if "part" in surface_header else None
        return cls(surface[:, :3], occupancy[:, :3], occupancy[:, 3].astype(np.int8), part_labels=part_labels)


def _parse_index(token: str, n_vertices: int, line_number: int) -> int:
    try:
        value = int(token.split("/")[0])
    except ValueError:
        raise MeshFormatError(f"bad vertex reference {token!r}", line_number) from None
    index = value - 1 if value > 0 else n_vertices + value
    if value == 0 or not 0 <= index < n_vertices:
        raise MeshFormatError(f"vertex reference {value} out of range (have {n_vertices})", line_number)
    return index


def load_mesh(path: Path) -> TriangleMesh:
    """
    Read an ASCII OBJ file (v/f records). Polygons are fan-triangulated, negative references are
    resolved relative to the current vertex count and zero-area faces are dropped.

    :raise NotFoundError: If the file does not exist
    :raise MeshFormatError: If a record cannot be parsed, with its line number
    """
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"mesh file {path} not found")

    vertices: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            tokens = line.split("#", 1)[0].split()
            if not tokens:
                continue
            keyword, args = tokens[0], tokens[1:]
            if keyword == "v":
                if len(args) < 3:
                    raise MeshFormatError("vertex needs three coordinates", line_number)
                try:
                    coords = [float(a) for a in args[:3]]
                except ValueError:
                    raise MeshFormatError(f"bad coordinate in {args[:3]}", line_number) from None
                vertices.append(coords)
            elif keyword == "f":
                if len(args) < 3:
                    raise MeshFormatError("face needs at least three vertices", line_number)
                polygon = [_parse_index(a, len(vertices), line_number) for a in args]
                for k in range(1, len(polygon) - 1):
                    faces.append((polygon[0], polygon[k], polygon[k + 1]))
            elif keyword not in _IGNORED_RECORDS:
                logger.debug("%s:%d: skipping %r record", path, line_number, keyword)

    mesh, dropped = TriangleMesh(np.array(vertices).reshape(-1, 3), np.array(faces).reshape(-1, 3)) \
        .without_degenerate_faces()
    if dropped:
        logger.warning("%s: dropped %d degenerate faces", path, dropped)
    logger.info("loaded %s: %d vertices, %d faces", path, mesh.n_vertices, mesh.n_faces)
    return mesh


def save_mesh(mesh: TriangleMesh, path: Path, with_owners: bool = True) -> None:
    """Write ASCII OBJ with 1-based indices; owner indices go in `# owner k` comments after each vertex."""
    lines = [f"# {mesh.n_vertices} vertices, {mesh.n_faces} faces"]
    owners = mesh.owners if with_owners else None
    for k, (x, y, z) in enumerate(mesh.vertices):
        lines.append(f"v {x:.17g} {y:.17g} {z:.17g}")
        if owners is not None:
            lines.append(f"# owner {owners[k]}")
    lines.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces)
    write_text(Path(path), "\n".join(lines) + "\n")


def normalize(m: TriangleMesh) -> tuple[TriangleMesh, NormalizationTransform]:
    """
    Center at the bounding-box center and scale the longest side to 1.

    :raise ValidationError: If the mesh is empty or has zero extent
    """
    if m.n_vertices == 0:
        raise ValidationError("cannot normalize an empty mesh")
    low, high = m.vertices.min(axis=0), m.vertices.max(axis=0)
    extent = float((high - low).max())
    if extent <= 0:
        raise ValidationError("cannot normalize a mesh with zero extent")
    transform = NormalizationTransform(center=(low + high) / 2.0, scale=1.0 / extent)
    return TriangleMesh(transform.apply(m.vertices), m.faces, m.owners), transform


def sample_surface(m: TriangleMesh, count: int, seed: int | np.random.Generator | None = None) -> np.ndarray:
    """
    Area-weighted uniform samples on the surface.

    :raise ValidationError: If count < 1 or the mesh has no area
    """
    if count < 1:
        raise ValidationError(f"sample count must be >= 1, got {count}")
    areas = m.face_areas()
    total = areas.sum()
    if not total > 0:
        raise ValidationError("cannot sample a mesh with zero surface area")

    rng = np.random.default_rng(seed)
    face = rng.choice(len(areas), size=count, p=areas / total)
    r1, r2 = rng.random(count), rng.random(count)
    s = np.sqrt(r1)
    bary = np.stack([1.0 - s, s * (1.0 - r2), s * r2], axis=1)
    return np.einsum("nk,nkd->nd", bary, m.triangles()[face])


def sample_occupancy_points(count: int, seed: int | np.random.Generator | None = None,
                            near_surface_fraction: float = 0.0, surface_points: np.ndarray | None = None,
                            noise: float = 0.01) -> np.ndarray:
    """
    Query points for occupancy labels: uniform over [-DOMAIN_BOUND, DOMAIN_BOUND]^3, optionally with
    a fraction drawn as jittered surface points.
    """
    if count < 1:
        raise ValidationError(f"sample count must be >= 1, got {count}")
    if not 0.0 <= near_surface_fraction <= 1.0:
        raise ValidationError(f"near_surface_fraction must be in [0, 1], got {near_surface_fraction}")

    rng = np.random.default_rng(seed)
    n_near = int(round(count * near_surface_fraction))
    if n_near and (surface_points is None or len(surface_points) == 0):
        raise ValidationError("near-surface sampling needs surface points")

    uniform = rng.uniform(-DOMAIN_BOUND, DOMAIN_BOUND, size=(count - n_near, 3))
    if not n_near:
        return uniform
    picks = surface_points[rng.integers(0, len(surface_points), size=n_near)]
    near = np.clip(picks + rng.normal(0.0, noise, size=(n_near, 3)), -DOMAIN_BOUND, DOMAIN_BOUND)
    return np.concatenate([uniform, near])


def _ray_crossings(points: np.ndarray, triangles: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Parity of ray/triangle hits for rays from each point along `direction` (Moller-Trumbore)."""
    v0 = triangles[:, 0]
    e1 = triangles[:, 1] - v0
    e2 = triangles[:, 2] - v0
    pvec = np.cross(direction, e2)
    det = np.einsum("fd,fd->f", e1, pvec)
    usable = np.abs(det) > 1e-14
    v0, e1, e2, pvec, det = v0[usable], e1[usable], e2[usable], pvec[usable], det[usable]
    inv = 1.0 / det

    inside = np.zeros(len(points), dtype=bool)
    chunk = max(1, PAIRS_PER_CHUNK // max(1, len(v0)))
    for start in range(0, len(points), chunk):
        tvec = points[start:start + chunk, None, :] - v0[None]
        u = np.einsum("cfd,fd->cf", tvec, pvec) * inv
        qvec = np.cross(tvec, e1[None])
        v = np.einsum("cfd,d->cf", qvec, direction) * inv
        t = np.einsum("cfd,fd->cf", qvec, e2) * inv
        hits = (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > 0.0)
        inside[start:start + chunk] = np.count_nonzero(hits, axis=1) % 2 == 1
    return inside


def label_occupancy(m: TriangleMesh, points: np.ndarray, seed: int = 0, threads: int = 1) -> np.ndarray:
    """
    Inside (1) / outside (0) labels by ray-crossing parity, majority vote over RAY_COUNT random rays.

    :raise DataIntegrityError: If the mesh is not watertight
    """
    boundary = m.boundary_edge_count()
    if m.is_empty() or boundary:
        raise DataIntegrityError(f"mesh is not watertight: {boundary} boundary edges")

    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(RAY_COUNT, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    triangles = m.triangles()

    def vote(block: np.ndarray) -> np.ndarray:
        return sum(_ray_crossings(block, triangles, d).astype(np.int64) for d in directions)

    if threads > 1 and len(points) > 1:
        blocks = np.array_split(points, threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            votes = np.concatenate(list(pool.map(vote, blocks)))
    else:
        votes = vote(points)

    return (votes * 2 > RAY_COUNT).astype(np.int8)


def sample_shape(m: TriangleMesh, surface_count: int, occupancy_count: int, seed: int = 0,
                 near_surface_fraction: float = 0.0, threads: int = 1) -> ShapeSample:
    """Normalize a watertight mesh and draw its surface and labeled occupancy samples."""
    normalized, transform = normalize(m)
    rng = np.random.default_rng(seed)
    surface = sample_surface(normalized, surface_count, rng)
    occupancy = sample_occupancy_points(occupancy_count, rng, near_surface_fraction, surface)
    labels = label_occupancy(normalized, occupancy, seed=seed, threads=threads)
    logger.info("sampled %d surface / %d occupancy points, inside fraction %.4f",
                surface_count, occupancy_count, labels.mean())
    return ShapeSample(surface, occupancy, labels, transform)
