"""
Shape Ingestion, Generation and Connectivity Transfer

This module holds the sampled-shape data model used throughout the pipeline
and everything that produces or consumes it directly.

Features:
- PointCloud / Correspondence value types with invariant checks
- OFF, ASCII PLY, OBJ and XYZ readers, ASCII PLY writer with scalar fields
- Uniform and barycentric dual-area (Voronoi) probability measures
- Deterministic sphere, torus and bumpy-sphere generators
- Connectivity transfer through a correspondence with a quality score

Author: SpectralReg
Version: 1.0.0
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.spatial import ConvexHull

from .config import get_logger
from .exceptions import DegenerateInput, DimensionMismatch, MissingConnectivity, ParseError

logger = get_logger("Geometry")

MEASURE_TOL = 1e-12
ROW_SUM_TOL = 1e-10
FORMATS = ("OFF", "PLY", "OBJ", "XYZ")


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PointCloud:
    """A sampled shape: coordinates, optional triangles and a probability measure.

    Use :meth:`from_arrays` to build one from raw data; it attaches and
    normalizes the measure. The constructor itself only validates.
    """
    points: np.ndarray  # ℓ×D
    triangles: Optional[np.ndarray]  # T×3 indices into points, or None
    measure: np.ndarray  # length ℓ, positive, sums to 1
    name: str = ""

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 2 or points.shape[0] == 0:
            raise DegenerateInput(f"{self.name or 'shape'}: points must be a non-empty ℓ×D array")
        if not np.all(np.isfinite(points)):
            raise DegenerateInput(f"{self.name or 'shape'}: non-finite coordinate")
        n_points = points.shape[0]
        if np.unique(points, axis=0).shape[0] != n_points:
            raise DegenerateInput(f"{self.name or 'shape'}: duplicate points")

        triangles = self.triangles
        if triangles is not None:
            triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
            if triangles.size == 0:
                triangles = None
            else:
                _check_triangles(triangles, n_points, self.name)

        measure = np.asarray(self.measure, dtype=float)
        if measure.shape != (n_points,):
            raise DimensionMismatch(
                f"{self.name or 'shape'}: measure has {measure.size} entries for {n_points} points"
            )
        if np.any(measure <= 0):
            raise DegenerateInput(f"{self.name or 'shape'}: measure must be strictly positive")
        if abs(measure.sum() - 1.0) > MEASURE_TOL:
            raise DegenerateInput(f"{self.name or 'shape'}: measure sums to {measure.sum()!r}, not 1")

        object.__setattr__(self, "points", _frozen(points))
        object.__setattr__(self, "triangles", None if triangles is None else _frozen(triangles))
        object.__setattr__(self, "measure", _frozen(measure))

    @classmethod
    def from_arrays(cls, points, triangles=None, measure=None, name: str = "") -> "PointCloud":
        """Build a PointCloud, defaulting to the uniform measure and normalizing."""
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if measure is None:
            measure = np.full(points.shape[0], 1.0 / points.shape[0])
        else:
            measure = np.asarray(measure, dtype=float)
            total = measure.sum()
            if not total > 0:
                raise DegenerateInput(f"{name or 'shape'}: measure has non-positive total")
            measure = measure / total
        return cls(points=points, triangles=triangles, measure=measure, name=name)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def has_triangles(self) -> bool:
        return self.triangles is not None

    def with_measure(self, measure: np.ndarray) -> "PointCloud":
        return PointCloud.from_arrays(self.points, self.triangles, measure, self.name)

    def scaled(self, factor: float) -> "PointCloud":
        """Uniformly scaled copy (same triangles and measure)."""
        return PointCloud(self.points * factor, self.triangles, self.measure, self.name)


def _row_argmax(matrix: sparse.csr_matrix) -> np.ndarray:
    """Column of each row's largest entry, ties to the lowest column."""
    if matrix.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    matrix = matrix.copy()
    matrix.sum_duplicates()
    coo = matrix.tocoo()
    peak = np.asarray(matrix.max(axis=1).todense()).ravel()
    best = np.full(matrix.shape[0], matrix.shape[1], dtype=np.int64)
    hit = coo.data == peak[coo.row]
    np.minimum.at(best, coo.row[hit], coo.col[hit].astype(np.int64))
    return best


@dataclass(frozen=True)
class Correspondence:
    """Row-stochastic soft map Π from source to target plus its argmax assignment."""
    source_size: int
    target_size: int
    assignment: np.ndarray
    matrix: sparse.csr_matrix = field(repr=False)

    def __post_init__(self):
        matrix = sparse.csr_matrix(self.matrix)
        if matrix.shape != (self.source_size, self.target_size):
            raise DimensionMismatch(
                f"correspondence matrix {matrix.shape} != ({self.source_size}, {self.target_size})"
            )
        if matrix.nnz and matrix.data.min() < 0:
            raise DegenerateInput("correspondence matrix has negative entries")
        row_sums = np.asarray(matrix.sum(axis=1)).ravel()
        if np.any(np.abs(row_sums - 1.0) > ROW_SUM_TOL):
            raise DegenerateInput("correspondence rows must sum to 1")
        assignment = np.asarray(self.assignment, dtype=np.int64)
        if assignment.shape != (self.source_size,):
            raise DimensionMismatch("assignment length must equal source_size")
        if assignment.size and (assignment.min() < 0 or assignment.max() >= self.target_size):
            raise DegenerateInput("assignment index out of range")
        mismatch = np.flatnonzero(assignment != _row_argmax(matrix))
        if mismatch.size:
            raise DegenerateInput(f"assignment of source {int(mismatch[0])} is not the row argmax of Π")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "assignment", _frozen(assignment))

    @classmethod
    def from_assignment(cls, assignment, target_size: int) -> "Correspondence":
        """Hard correspondence: Π is the one-hot matrix of ``assignment``."""
        assignment = np.asarray(assignment, dtype=np.int64)
        if assignment.size and (assignment.min() < 0 or assignment.max() >= target_size):
            raise DegenerateInput("assignment index out of range")
        rows = np.arange(assignment.size)
        matrix = sparse.csr_matrix(
            (np.ones(assignment.size), (rows, assignment)), shape=(assignment.size, target_size)
        )
        return cls(assignment.size, target_size, assignment, matrix)


@dataclass(frozen=True)
class ConnectivityTransfer:
    """Source triangles pushed through a correspondence onto the target points."""
    target: PointCloud
    triangles: np.ndarray  # every transferred triangle, degenerate ones included
    quality: float  # fraction of non-degenerate transferred triangles
    edge_length_ratio: Optional[float] = None

    @property
    def valid_mask(self) -> np.ndarray:
        t = self.triangles
        return (t[:, 0] != t[:, 1]) & (t[:, 1] != t[:, 2]) & (t[:, 0] != t[:, 2])

    def as_shape(self) -> PointCloud:
        """Target points carrying the non-degenerate transferred triangles."""
        kept = self.triangles[self.valid_mask]
        return PointCloud(self.target.points, kept if len(kept) else None,
                          self.target.measure, f"{self.target.name}:transferred")


def _check_triangles(triangles: np.ndarray, n_points: int, name: str) -> None:
    if triangles.min() < 0 or triangles.max() >= n_points:
        bad = int(triangles.max()) if triangles.max() >= n_points else int(triangles.min())
        raise DegenerateInput(f"{name or 'shape'}: triangle references vertex {bad} of {n_points}")
    t = triangles
    if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
        raise DegenerateInput(f"{name or 'shape'}: triangle with a repeated vertex index")


# ---------------------------------------------------------------------------
# Readers and writers
# ---------------------------------------------------------------------------

def _strip_comments(text: str) -> List[str]:
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    return lines


def _fan(polygon: List[int]) -> List[Tuple[int, int, int]]:
    return [(polygon[0], polygon[k], polygon[k + 1]) for k in range(1, len(polygon) - 1)]


def _floats(tokens: List[str], where: str) -> List[float]:
    try:
        values = [float(t) for t in tokens]
    except ValueError as e:
        raise ParseError(f"{where}: {e}") from e
    if not all(math.isfinite(v) for v in values):
        raise ParseError(f"{where}: non-finite coordinate")
    return values


def _ints(tokens: List[str], where: str) -> List[int]:
    try:
        return [int(t) for t in tokens]
    except ValueError as e:
        raise ParseError(f"{where}: {e}") from e


def _read_off(path: Path):
    lines = _strip_comments(path.read_text())
    if not lines or not lines[0].startswith("OFF"):
        raise ParseError(f"{path}: not a valid OFF header")
    header = lines[0][3:].split()
    body = lines[1:]
    if not header:
        if not body:
            raise ParseError(f"{path}: missing OFF counts")
        header, body = body[0].split(), body[1:]
    counts = _ints(header[:2], f"{path}: OFF counts")
    if len(counts) < 2:
        raise ParseError(f"{path}: missing OFF counts")
    n_vertices, n_faces = counts
    if len(body) < n_vertices + n_faces:
        raise ParseError(f"{path}: expected {n_vertices} vertices and {n_faces} faces")

    points = [_floats(body[i].split()[:3], f"{path}: vertex {i}") for i in range(n_vertices)]
    triangles = []
    for k in range(n_faces):
        tokens = body[n_vertices + k].split()
        size = _ints(tokens[:1], f"{path}: face {k}")[0]
        polygon = _ints(tokens[1:1 + size], f"{path}: face {k}")
        if size < 3 or len(polygon) != size:
            raise ParseError(f"{path}: face {k} is not a polygon")
        triangles.extend(_fan(polygon))
    return np.array(points), (np.array(triangles) if triangles else None)


def _read_ply(path: Path):
    lines = path.read_text(errors="replace").splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError(f"{path}: not a valid PLY header")
    elements = []  # (name, count, [(property, is_list)])
    cursor = 1
    fmt = None
    while cursor < len(lines) and lines[cursor].strip() != "end_header":
        tokens = lines[cursor].split()
        cursor += 1
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            fmt = tokens[1] if len(tokens) > 1 else None
        elif tokens[0] == "element":
            elements.append((tokens[1], _ints(tokens[2:3], f"{path}: element count")[0], []))
        elif tokens[0] == "property" and elements:
            is_list = len(tokens) > 1 and tokens[1] == "list"
            elements[-1][2].append((tokens[-1], is_list))
    if cursor >= len(lines):
        raise ParseError(f"{path}: missing end_header")
    if fmt != "ascii":
        raise ParseError(f"{path}: only ASCII PLY is supported (format {fmt})")

    body = [line for line in lines[cursor + 1:] if line.strip()]
    points, triangles = None, []
    offset = 0
    for name, count, props in elements:
        records = body[offset:offset + count]
        offset += count
        if len(records) != count:
            raise ParseError(f"{path}: expected {count} '{name}' records")
        if name == "vertex":
            columns = [p for p, _ in props]
            xyz = [columns.index(axis) for axis in ("x", "y", "z") if axis in columns]
            if len(xyz) < 2:
                raise ParseError(f"{path}: vertex element lacks coordinates")
            rows = []
            for i, record in enumerate(records):
                values = _floats(record.split(), f"{path}: vertex {i}")
                rows.append([values[c] for c in xyz])
            points = np.array(rows)
        elif name == "face":
            for k, record in enumerate(records):
                tokens = _ints(record.split(), f"{path}: face {k}")
                polygon = tokens[1:1 + tokens[0]]
                if len(polygon) < 3:
                    raise ParseError(f"{path}: face {k} is not a polygon")
                triangles.extend(_fan(polygon))
    if points is None:
        raise ParseError(f"{path}: no vertex element")
    return points, (np.array(triangles) if triangles else None)


def _read_obj(path: Path):
    points, triangles = [], []
    for number, raw in enumerate(path.read_text().splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        if tokens[0] == "v":
            points.append(_floats(tokens[1:4], f"{path}:{number}"))
        elif tokens[0] == "f":
            polygon = []
            for token in tokens[1:]:
                index = _ints([token.split("/")[0]], f"{path}:{number}")[0]
                polygon.append(index - 1 if index > 0 else len(points) + index)
            if len(polygon) < 3:
                raise ParseError(f"{path}:{number}: face is not a polygon")
            triangles.extend(_fan(polygon))
    if not points:
        raise ParseError(f"{path}: no vertex records")
    return np.array(points), (np.array(triangles) if triangles else None)


def _read_xyz(path: Path):
    try:
        points = np.loadtxt(path, ndmin=2, comments="#")
    except ValueError as e:
        raise ParseError(f"{path}: {e}") from e
    if points.size == 0:
        raise ParseError(f"{path}: no points")
    if not np.all(np.isfinite(points)):
        raise ParseError(f"{path}: non-finite coordinate")
    return points, None


_READERS = {"OFF": _read_off, "PLY": _read_ply, "OBJ": _read_obj, "XYZ": _read_xyz}


def infer_format(path: Union[str, Path]) -> str:
    suffix = Path(path).suffix.lstrip(".").upper()
    if suffix not in FORMATS:
        raise ParseError(f"{path}: cannot infer shape format from extension")
    return suffix


def load_shape(path: Union[str, Path], format: Optional[str] = None) -> PointCloud:
    """Read a shape file with the uniform measure attached.

    Vertices keep their file order so indices are stable across runs.
    """
    path = Path(path)
    fmt = (format or infer_format(path)).upper()
    if fmt not in _READERS:
        raise ParseError(f"unknown shape format {format!r}")
    points, triangles = _READERS[fmt](path)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ParseError(f"{path}: no points")
    if triangles is not None and (triangles.min() < 0 or triangles.max() >= len(points)):
        bad = int(triangles.max()) if triangles.max() >= len(points) else int(triangles.min())
        raise DegenerateInput(f"{path}: face references vertex {bad} in a {len(points)}-vertex file")
    shape = PointCloud.from_arrays(points, triangles, name=path.stem)
    logger.info(
        f"Loaded {fmt} shape {path.name}: {shape.size} points, "
        f"{0 if triangles is None else len(shape.triangles)} triangles"
    )
    return shape


def save_ply(path: Union[str, Path], shape: PointCloud,
             scalars: Optional[Dict[str, np.ndarray]] = None) -> Path:
    """Write an ASCII PLY; ``scalars`` become extra float vertex properties."""
    path = Path(path)
    points = shape.points
    if points.shape[1] > 3:
        raise DimensionMismatch(f"PLY output needs D ≤ 3, got {points.shape[1]}")
    if points.shape[1] < 3:
        points = np.hstack([points, np.zeros((shape.size, 3 - points.shape[1]))])
    scalars = scalars or {}
    columns = [points]
    for name, values in scalars.items():
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size != shape.size:
            raise DimensionMismatch(f"scalar field '{name}' has {values.size} values for {shape.size} vertices")
        columns.append(values[:, None])
    table = np.hstack(columns)
    triangles = shape.triangles if shape.triangles is not None else np.zeros((0, 3), dtype=np.int64)

    header = ["ply", "format ascii 1.0", f"comment {shape.name}", f"element vertex {shape.size}",
              "property double x", "property double y", "property double z"]
    header += [f"property double {name}" for name in scalars]
    header += [f"element face {len(triangles)}", "property list uchar int vertex_indices", "end_header"]

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write("\n".join(header) + "\n")
        for row in table:
            f.write(" ".join(f"{v:.17g}" for v in row) + "\n")
        for a, b, c in triangles:
            f.write(f"3 {a} {b} {c}\n")
    return path


# ---------------------------------------------------------------------------
# Measures and relabeling
# ---------------------------------------------------------------------------

def triangle_areas(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    if points.shape[1] == 2:
        points = np.hstack([points, np.zeros((len(points), 1))])
    v1, v2, v3 = (points[triangles[:, k]] for k in range(3))
    return 0.5 * np.linalg.norm(np.cross(v2 - v1, v3 - v1), axis=1)


def uniform_measure(shape: PointCloud) -> PointCloud:
    return shape.with_measure(np.ones(shape.size))


def voronoi_measure(shape: PointCloud) -> PointCloud:
    """Attach the barycentric dual-area measure (one third of incident triangle area)."""
    if not shape.has_triangles:
        raise MissingConnectivity(f"{shape.name or 'shape'}: Voronoi measure needs triangles")
    areas = triangle_areas(shape.points, shape.triangles)
    weights = np.bincount(shape.triangles.ravel(), weights=np.repeat(areas / 3.0, 3),
                          minlength=shape.size)
    if not weights.sum() > 0:
        raise DegenerateInput(f"{shape.name or 'shape'}: zero total area")
    empty = np.flatnonzero(weights <= 0)
    if empty.size:
        raise DegenerateInput(f"{shape.name or 'shape'}: vertex {int(empty[0])} has zero dual area")
    return shape.with_measure(weights)


def permute_shape(shape: PointCloud, permutation: np.ndarray) -> PointCloud:
    """Relabel vertices so that old index i becomes ``permutation[i]``."""
    permutation = np.asarray(permutation, dtype=np.int64)
    if np.sort(permutation).tolist() != list(range(shape.size)):
        raise DegenerateInput("not a permutation of the vertex indices")
    inverse = np.argsort(permutation)
    triangles = None if shape.triangles is None else permutation[shape.triangles]
    return PointCloud(shape.points[inverse], triangles, shape.measure[inverse], f"{shape.name}:permuted")


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

_GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0

_ICOSAHEDRON_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]


def _icosphere(levels: int) -> Tuple[np.ndarray, np.ndarray]:
    t = _GOLDEN
    vertices = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
                (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
                (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    vertices = [np.array(v, dtype=float) / np.linalg.norm(v) for v in vertices]
    faces = list(_ICOSAHEDRON_FACES)
    for _ in range(levels):
        midpoints: Dict[Tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in midpoints:
                m = vertices[a] + vertices[b]
                vertices.append(m / np.linalg.norm(m))
                midpoints[key] = len(vertices) - 1
            return midpoints[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = refined
    return np.array(vertices), np.array(faces, dtype=np.int64)


def _fibonacci_sphere(count: int) -> Tuple[np.ndarray, np.ndarray]:
    i = np.arange(count)
    z = 1.0 - (2.0 * i + 1.0) / count
    r = np.sqrt(1.0 - z * z)
    phi = i * (2.0 * math.pi / _GOLDEN ** 2)
    points = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    triangles = ConvexHull(points).simplices.astype(np.int64)
    # orient outward
    v1, v2, v3 = (points[triangles[:, k]] for k in range(3))
    inward = np.einsum("ij,ij->i", np.cross(v2 - v1, v3 - v1), v1 + v2 + v3) < 0
    triangles[inward] = triangles[inward][:, [0, 2, 1]]
    return points, triangles


def _sphere(resolution: int) -> Tuple[np.ndarray, np.ndarray]:
    levels = math.log((resolution - 2) / 10.0, 4) if resolution > 2 else -1
    if levels >= 0 and 10 * 4 ** round(levels) + 2 == resolution:
        return _icosphere(int(round(levels)))
    return _fibonacci_sphere(resolution)


def _torus_grid(resolution: int) -> Tuple[int, int]:
    target = math.log(2.5)
    pairs = [(a, resolution // a) for a in range(3, resolution // 3 + 1)
             if resolution % a == 0 and resolution // a >= 3]
    if pairs:
        return min(pairs, key=lambda p: (abs(math.log(p[0] / p[1]) - target), p))
    a = max(3, round(math.sqrt(resolution * 2.5)))
    return a, max(3, round(resolution / a))


def _torus(resolution: int, major: float = 1.0, minor: float = 0.4) -> Tuple[np.ndarray, np.ndarray]:
    a, b = _torus_grid(resolution)
    u = 2.0 * math.pi * np.arange(a) / a
    v = 2.0 * math.pi * np.arange(b) / b
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ring = major + minor * np.cos(vv)
    points = np.column_stack([(ring * np.cos(uu)).ravel(), (ring * np.sin(uu)).ravel(),
                              (minor * np.sin(vv)).ravel()])
    i, j = np.meshgrid(np.arange(a), np.arange(b), indexing="ij")
    v00 = (i * b + j).ravel()
    v10 = (((i + 1) % a) * b + j).ravel()
    v01 = (i * b + (j + 1) % b).ravel()
    v11 = (((i + 1) % a) * b + (j + 1) % b).ravel()
    triangles = np.concatenate([np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])])
    return points, triangles


def _bump_field(points: np.ndarray, seed: int, bumps: int = 6, width: float = 0.45) -> np.ndarray:
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((bumps, 3))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    heights = rng.uniform(0.05, 0.2, size=bumps)
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return 1.0 + (heights[None, :] * np.exp(-d2 / (2.0 * width ** 2))).sum(axis=1)


def generate_shape(kind: str, resolution: int, seed: int = 0) -> PointCloud:
    """Deterministic triangulated test shape with exactly ``resolution`` vertices.

    ``sphere`` and ``bumpy_sphere`` are icospheres when the resolution is an
    icosphere vertex count (12, 42, 162, 642, 2562, ...) and convex hulls of a
    Fibonacci lattice otherwise. ``torus`` uses a periodic grid; its vertex count
    is exact whenever ``resolution`` factors into two sides of at least 3.
    ``bumpy_sphere`` stretches the sphere into an ellipsoid and adds seeded
    Gaussian bumps along the radius, which separates eigenvalues.
    """
    if resolution < 12:
        raise DegenerateInput(f"resolution {resolution} too small to triangulate (need ≥ 12)")
    if kind == "sphere":
        points, triangles = _sphere(resolution)
    elif kind == "bumpy_sphere":
        points, triangles = _sphere(resolution)
        points = points * np.array([1.0, 0.85, 0.7]) * _bump_field(points, seed)[:, None]
    elif kind == "torus":
        points, triangles = _torus(resolution)
    else:
        raise DegenerateInput(f"unknown shape kind {kind!r}")
    return PointCloud.from_arrays(points, triangles, name=f"{kind}-{resolution}-{seed}")


# ---------------------------------------------------------------------------
# Connectivity transfer
# ---------------------------------------------------------------------------

def _total_edge_length(points: np.ndarray, triangles: np.ndarray) -> float:
    if len(triangles) == 0:
        return 0.0
    edges = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    return float(np.linalg.norm(points[edges[:, 0]] - points[edges[:, 1]], axis=1).sum())


def transfer_connectivity(source: PointCloud, target: PointCloud,
                          corr: Correspondence) -> ConnectivityTransfer:
    """Push source triangles through ``corr.assignment`` onto the target points."""
    if not source.has_triangles:
        raise MissingConnectivity(f"{source.name or 'source'}: nothing to transfer")
    if corr.source_size != source.size or corr.target_size != target.size:
        raise DimensionMismatch(
            f"correspondence is {corr.source_size}→{corr.target_size}, shapes are "
            f"{source.size}→{target.size}"
        )
    triangles = np.asarray(corr.assignment)[source.triangles]
    result = ConnectivityTransfer(target=target, triangles=triangles, quality=0.0)
    valid = result.valid_mask
    quality = float(valid.mean())
    ratio = None
    if target.has_triangles:
        own = _total_edge_length(target.points, target.triangles)
        ratio = _total_edge_length(target.points, triangles[valid]) / own if own > 0 else None
    logger.info(f"Connectivity transfer: {int(valid.sum())}/{len(triangles)} non-degenerate triangles")
    return ConnectivityTransfer(target=target, triangles=triangles, quality=quality,
                                edge_length_ratio=ratio)
