"""
Shape ingestion for elastic 2D-to-3D matching.
Loads query curves (CSV/JSON) and target meshes (OFF/OBJ), derives mesh
connectivity, computes graph geodesics and tessellates the query solid.
"""
import json
import logging
import math
import os
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import triangle
from scipy import sparse
from scipy.sparse import csgraph

from .errors import (
    DegenerateCurve,
    Disconnected,
    NonManifold,
    ParseError,
    SelfIntersecting,
)

logger = logging.getLogger(__name__)

CURVE_FORMATS = {'.csv': 'csv', '.txt': 'csv', '.json': 'json'}
MESH_FORMATS = {'.off': 'off', '.obj': 'obj'}

# Default solid resolution: polygon area / DEFAULT_AREA_DIVISOR per triangle
DEFAULT_AREA_DIVISOR = 1000.0
DEFAULT_MIN_ANGLE = 20.0
EXACT_DIAMETER_MAX_N = 2000
# Centroid insertion rounds before tessellate_solid gives up on max_area
MAX_REFINE_ROUNDS = 40

_AREA_EPS = 1e-14


def _frozen(array: np.ndarray) -> np.ndarray:
    """Return a read-only contiguous copy."""
    out = np.ascontiguousarray(array).copy()
    out.setflags(write=False)
    return out


def _unique_edges(faces: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Undirected edges (i < j) of a triangle list and their face counts."""
    if len(faces) == 0:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
    pairs = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    pairs.sort(axis=1)
    return np.unique(pairs, axis=0, return_counts=True)


def _edge_graph(points: np.ndarray, edges: np.ndarray, n: int) -> sparse.csr_matrix:
    """Symmetric CSR matrix of Euclidean edge lengths with sorted indices."""
    lengths = np.linalg.norm(points[edges[:, 1]] - points[edges[:, 0]], axis=1)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    data = np.concatenate([lengths, lengths])
    graph = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
    graph.sort_indices()
    return graph


def _triangle_areas(points: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a = points[faces[:, 1]] - points[faces[:, 0]]
    b = points[faces[:, 2]] - points[faces[:, 0]]
    if points.shape[1] == 2:
        return 0.5 * np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    return 0.5 * np.linalg.norm(np.cross(a, b), axis=1)


def _infer_format(path: Path, fmt: Optional[str], table: Dict[str, str]) -> str:
    if fmt:
        fmt = fmt.lower().lstrip('.')
        if fmt not in set(table.values()):
            raise ValueError(f"Unsupported format: {fmt}")
        return fmt
    extension = path.suffix.lower()
    if extension not in table:
        raise ValueError(
            f"Unsupported format: {extension}. Supported: {', '.join(sorted(table))}"
        )
    return table[extension]


# ============================================================================
# Domain types
# ============================================================================

@dataclass(frozen=True, eq=False)
class Curve2D:
    """Closed, simple, counter-clockwise planar polygon (the query shape)."""

    points: np.ndarray

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]]) -> 'Curve2D':
        """
        Validate a point list and build a curve.

        Consecutive duplicates (including a repeated closing point) are
        collapsed and clockwise input is reversed.

        Raises:
            ParseError: If the points are not an (m, 2) array of finite floats
            DegenerateCurve: If fewer than 3 distinct points or zero area remain
            SelfIntersecting: If the polygon is not simple
        """
        try:
            pts = np.asarray(points, dtype=np.float64)
        except (TypeError, ValueError) as e:
            raise ParseError(f"Curve points are not numeric: {e}") from e
        if pts.size == 0:
            raise DegenerateCurve("Curve has no points")
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ParseError(f"Curve points must have shape (m, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ParseError("Curve points must be finite")

        if len(pts):
            keep = np.ones(len(pts), dtype=bool)
            keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
            pts = pts[keep]
        while len(pts) > 1 and np.array_equal(pts[-1], pts[0]):
            pts = pts[:-1]

        if len(pts) < 3:
            raise DegenerateCurve(f"Curve needs at least 3 distinct points, got {len(pts)}")

        area = _signed_area(pts)
        extent = float(np.ptp(pts, axis=0).max())
        if abs(area) <= _AREA_EPS * extent * extent:
            raise DegenerateCurve("Curve encloses zero area")

        if _is_self_intersecting(pts):
            raise SelfIntersecting("Curve polygon intersects itself")
        if area < 0:
            pts = pts[::-1]

        return cls(points=_frozen(pts))

    @property
    def m(self) -> int:
        return len(self.points)

    @property
    def area(self) -> float:
        return _signed_area(self.points)

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.roll(self.points, -1, axis=0) - self.points, axis=1)

    def scaled(self, factor: float) -> 'Curve2D':
        return Curve2D(points=_frozen(self.points * factor))

    def to_list(self):
        return [[float(x), float(y)] for x, y in self.points]


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Connected edge-manifold triangle mesh (the target shape)."""

    vertices: np.ndarray
    faces: np.ndarray
    edges: np.ndarray

    @classmethod
    def from_arrays(cls, vertices, faces) -> 'TriMesh':
        """
        Build a mesh from vertex and face arrays.

        Zero-area faces are dropped with a warning.

        Raises:
            ParseError: If arrays are malformed or indices out of range
            NonManifold: If an edge belongs to more than two faces
            Disconnected: If the edge graph has several components
        """
        try:
            verts = np.asarray(vertices, dtype=np.float64)
            tris = np.asarray(faces, dtype=np.int64)
        except (TypeError, ValueError) as e:
            raise ParseError(f"Mesh arrays are not numeric: {e}") from e
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise ParseError(f"Vertices must have shape (n, 3), got {verts.shape}")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise ParseError(f"Faces must have shape (f, 3), got {tris.shape}")
        if not np.all(np.isfinite(verts)):
            raise ParseError("Vertex coordinates must be finite")
        n = len(verts)
        if len(tris) and (tris.min() < 0 or tris.max() >= n):
            raise ParseError("Face index out of range")

        if len(tris):
            extent = float(np.ptp(verts, axis=0).max())
            areas = _triangle_areas(verts, tris)
            valid = areas > _AREA_EPS * extent * extent
            dropped = int(np.count_nonzero(~valid))
            if dropped:
                logger.warning("Dropped %d zero-area face(s)", dropped)
            tris = tris[valid]
        if len(tris) == 0:
            raise ParseError("Mesh has no valid faces")

        edges, counts = _unique_edges(tris)
        if np.any(counts > 2):
            bad = edges[np.argmax(counts > 2)]
            raise NonManifold(f"Edge ({bad[0]}, {bad[1]}) is shared by more than two faces")

        graph = _edge_graph(verts, edges, n)
        n_components, _ = csgraph.connected_components(graph, directed=False)
        if n_components > 1:
            raise Disconnected(f"Mesh has {n_components} connected components")

        return cls(vertices=_frozen(verts), faces=_frozen(tris), edges=_frozen(edges))

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_graph(self) -> sparse.csr_matrix:
        """Symmetric CSR adjacency weighted by Euclidean edge length."""
        return _edge_graph(self.vertices, self.edges, self.n)

    @cached_property
    def adjacency(self) -> Tuple[np.ndarray, ...]:
        """Sorted neighbor indices per vertex."""
        graph = self.edge_graph
        return tuple(
            graph.indices[graph.indptr[j]:graph.indptr[j + 1]] for j in range(self.n)
        )

    @cached_property
    def face_areas(self) -> np.ndarray:
        return _triangle_areas(self.vertices, self.faces)

    @property
    def surface_area(self) -> float:
        return float(self.face_areas.sum())

    def scaled(self, factor: float) -> 'TriMesh':
        return TriMesh(vertices=_frozen(self.vertices * factor), faces=self.faces, edges=self.edges)

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> 'TriMesh':
        """Apply a rigid motion x -> R x + t."""
        moved = self.vertices @ np.asarray(rotation, dtype=np.float64).T + translation
        return TriMesh(vertices=_frozen(moved), faces=self.faces, edges=self.edges)


@dataclass(frozen=True, eq=False)
class PlanarSolidMesh:
    """Triangulation of the region bounded by a Curve2D."""

    vertices: np.ndarray
    faces: np.ndarray
    boundary_map: np.ndarray

    @property
    def n(self) -> int:
        return len(self.vertices)

    @cached_property
    def edges(self) -> np.ndarray:
        return _unique_edges(self.faces)[0]

    @cached_property
    def edge_graph(self) -> sparse.csr_matrix:
        return _edge_graph(self.vertices, self.edges, self.n)

    @cached_property
    def face_areas(self) -> np.ndarray:
        return _triangle_areas(self.vertices, self.faces)

    @property
    def area(self) -> float:
        return float(self.face_areas.sum())

    def scaled(self, factor: float) -> 'PlanarSolidMesh':
        return PlanarSolidMesh(
            vertices=_frozen(self.vertices * factor),
            faces=self.faces,
            boundary_map=self.boundary_map,
        )


@dataclass(frozen=True, eq=False)
class GeodesicField:
    """Single-source graph geodesic distances."""

    source: int
    dist: np.ndarray


Shape = Union[TriMesh, PlanarSolidMesh]


# ============================================================================
# Curve helpers
# ============================================================================

def _signed_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _orient(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - \
        (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def _on_segment(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """c lies in the bounding box of segment ab (collinearity checked by caller)."""
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    return np.all((c >= lo) & (c <= hi), axis=-1)


def _is_self_intersecting(points: np.ndarray) -> bool:
    """Brute-force O(m^2) test over all segment pairs."""
    m = len(points)
    starts = points
    ends = np.roll(points, -1, axis=0)

    # Adjacent segments only meet at their shared vertex unless they fold back
    incoming = ends - starts
    outgoing = np.roll(incoming, -1, axis=0)
    cross = incoming[:, 0] * outgoing[:, 1] - incoming[:, 1] * outgoing[:, 0]
    dot = np.einsum('ij,ij->i', incoming, outgoing)
    if np.any((cross == 0) & (dot < 0)):
        return True

    i, j = np.triu_indices(m, k=2)
    keep = ~((i == 0) & (j == m - 1))
    i, j = i[keep], j[keep]
    if len(i) == 0:
        return False

    p1, q1, p2, q2 = starts[i], ends[i], starts[j], ends[j]
    o1 = _orient(p1, q1, p2)
    o2 = _orient(p1, q1, q2)
    o3 = _orient(p2, q2, p1)
    o4 = _orient(p2, q2, q1)

    proper = (np.sign(o1) * np.sign(o2) < 0) & (np.sign(o3) * np.sign(o4) < 0)
    touching = (
        ((o1 == 0) & _on_segment(p1, q1, p2))
        | ((o2 == 0) & _on_segment(p1, q1, q2))
        | ((o3 == 0) & _on_segment(p2, q2, p1))
        | ((o4 == 0) & _on_segment(p2, q2, q1))
    )
    return bool(np.any(proper | touching))


def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd crossing test of each point against a closed polygon."""
    x = points[:, 0:1]
    y = points[:, 1:2]
    x0, y0 = polygon[:, 0], polygon[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    straddles = (y0 > y) != (y1 > y)
    with np.errstate(divide='ignore', invalid='ignore'):
        x_cross = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    hits = straddles & (x < x_cross)
    return np.count_nonzero(hits, axis=1) % 2 == 1


# ============================================================================
# Loading and saving
# ============================================================================

def validate_shape_file(file_path: str) -> Tuple[bool, str]:
    """
    Validate that a file can be loaded as a curve or a mesh.

    Args:
        file_path: Path to the file

    Returns:
        Tuple of (is_valid, error_message)
    """
    path = Path(file_path)

    if not path.exists():
        return False, "File does not exist"

    if not path.is_file():
        return False, "Path is not a file"

    extension = path.suffix.lower()
    supported = sorted(set(CURVE_FORMATS) | set(MESH_FORMATS))
    if extension not in supported:
        return False, f"Unsupported format. Supported: {', '.join(supported)}"

    if not os.access(path, os.R_OK):
        return False, "File is not readable (permission denied)"

    return True, ""


def is_mesh_file(file_path: str) -> bool:
    return Path(file_path).suffix.lower() in MESH_FORMATS


def load_curve(file_path: str, fmt: Optional[str] = None) -> Curve2D:
    """
    Load a closed query curve.

    Args:
        file_path: Path to a CSV ("x,y" per line) or JSON ([[x, y], ...]) file
        fmt: Optional explicit format ("csv" or "json"); inferred from suffix otherwise

    Returns:
        Validated counter-clockwise Curve2D

    Raises:
        FileNotFoundError: If the file doesn't exist
        ParseError, DegenerateCurve, SelfIntersecting
    """
    path = Path(file_path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {file_path}")
    fmt = _infer_format(path, fmt, CURVE_FORMATS)
    text = path.read_text(encoding='utf-8')

    if fmt == 'json':
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"{path.name}: invalid JSON: {e}") from e
        if not isinstance(data, list) or not all(
                isinstance(p, list) and len(p) == 2 for p in data):
            raise ParseError(f"{path.name}: expected a JSON array of [x, y] pairs")
        points = data
    else:
        points = []
        for line_no, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            fields = line.split(',')
            if len(fields) != 2:
                raise ParseError(f"{path.name}:{line_no}: expected 'x,y'")
            try:
                points.append([float(fields[0]), float(fields[1])])
            except ValueError as e:
                raise ParseError(f"{path.name}:{line_no}: {e}") from e

    logger.debug("Loaded %d curve points from %s", len(points), path.name)
    return Curve2D.from_points(points)


def save_curve(curve: Curve2D, file_path: str, fmt: Optional[str] = None):
    """Write a curve in CSV or JSON; floats are written at full repr precision."""
    path = Path(file_path)
    fmt = _infer_format(path, fmt, CURVE_FORMATS)
    if fmt == 'json':
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(curve.to_list(), f)
    else:
        with open(path, 'w', encoding='utf-8') as f:
            for x, y in curve.to_list():
                f.write(f"{x!r},{y!r}\n")


def _fan(polygon: Sequence[int]):
    if len(polygon) < 3:
        raise ParseError(f"Face with {len(polygon)} vertices")
    return [(polygon[0], polygon[k], polygon[k + 1]) for k in range(1, len(polygon) - 1)]


def _parse_off(text: str):
    lines = [line.split('#', 1)[0].strip() for line in text.splitlines()]
    lines = [line for line in lines if line]
    if not lines or not lines[0].startswith('OFF'):
        raise ParseError("Missing OFF header")
    inline_counts = lines[0][3:].split()
    if inline_counts:
        counts, body = inline_counts, lines[1:]
    else:
        counts, body = lines[1].split(), lines[2:]
    num_vertices, num_faces = int(counts[0]), int(counts[1])

    vertices = [[float(t) for t in line.split()[:3]] for line in body[:num_vertices]]
    if len(vertices) != num_vertices or any(len(v) != 3 for v in vertices):
        raise ParseError("Truncated OFF vertex block")
    faces = []
    for line in body[num_vertices:num_vertices + num_faces]:
        tokens = line.split()
        k = int(tokens[0])
        faces.extend(_fan([int(t) for t in tokens[1:1 + k]]))
    if len(body) < num_vertices + num_faces:
        raise ParseError("Truncated OFF face block")
    return vertices, faces


def _parse_obj(text: str):
    vertices = []
    faces = []
    for line in text.splitlines():
        tokens = line.split('#', 1)[0].split()
        if not tokens:
            continue
        if tokens[0] == 'v':
            vertices.append([float(t) for t in tokens[1:4]])
        elif tokens[0] == 'f':
            polygon = []
            for token in tokens[1:]:
                index = int(token.split('/')[0])
                polygon.append(index - 1 if index > 0 else len(vertices) + index)
            faces.extend(_fan(polygon))
    return vertices, faces


def load_mesh(file_path: str, fmt: Optional[str] = None) -> TriMesh:
    """
    Load a target mesh; polygons are fan-triangulated, normals/UVs ignored.

    Args:
        file_path: Path to an OFF or OBJ file
        fmt: Optional explicit format ("off" or "obj")

    Returns:
        Connected edge-manifold TriMesh

    Raises:
        FileNotFoundError: If the file doesn't exist
        ParseError, NonManifold, Disconnected
    """
    path = Path(file_path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {file_path}")
    fmt = _infer_format(path, fmt, MESH_FORMATS)
    text = path.read_text(encoding='utf-8', errors='replace')

    try:
        vertices, faces = _parse_off(text) if fmt == 'off' else _parse_obj(text)
    except ParseError as e:
        raise ParseError(f"{path.name}: {e}") from e
    except (ValueError, IndexError) as e:
        raise ParseError(f"{path.name}: malformed {fmt.upper()} data: {e}") from e

    mesh = TriMesh.from_arrays(vertices, np.asarray(faces, dtype=np.int64).reshape(-1, 3))
    logger.debug("Loaded mesh %s: n=%d, faces=%d", path.name, mesh.n, mesh.num_faces)
    return mesh


def save_mesh(mesh: TriMesh, file_path: str, fmt: Optional[str] = None):
    """Write a mesh as OFF or OBJ at full float precision."""
    path = Path(file_path)
    fmt = _infer_format(path, fmt, MESH_FORMATS)
    with open(path, 'w', encoding='utf-8') as f:
        if fmt == 'off':
            f.write(f"OFF\n{mesh.n} {mesh.num_faces} {mesh.num_edges}\n")
            for x, y, z in mesh.vertices.tolist():
                f.write(f"{x!r} {y!r} {z!r}\n")
            for a, b, c in mesh.faces.tolist():
                f.write(f"3 {a} {b} {c}\n")
        else:
            for x, y, z in mesh.vertices.tolist():
                f.write(f"v {x!r} {y!r} {z!r}\n")
            for a, b, c in mesh.faces.tolist():
                f.write(f"f {a + 1} {b + 1} {c + 1}\n")


# ============================================================================
# Geodesics
# ============================================================================

def geodesic_distances(mesh: Shape, source: int) -> GeodesicField:
    """
    Single-source shortest-path distances over the edge graph.

    Args:
        mesh: TriMesh or PlanarSolidMesh
        source: Source vertex index

    Returns:
        GeodesicField with dist[source] == 0
    """
    if not 0 <= source < mesh.n:
        raise ValueError(f"Source {source} out of range for {mesh.n} vertices")
    dist = csgraph.dijkstra(mesh.edge_graph, directed=False, indices=int(source))
    return GeodesicField(source=int(source), dist=_frozen(dist))


def geodesic_diameter(mesh: Shape, exact: Optional[bool] = None,
                      max_exact_n: int = EXACT_DIAMETER_MAX_N,
                      block_size: int = 256) -> float:
    """
    Largest graph-geodesic distance on the shape.

    Args:
        mesh: TriMesh or PlanarSolidMesh
        exact: True for all sources, False for ceil(sqrt(n)) farthest-point
            sampled sources (a lower bound); None picks exact iff n <= max_exact_n
        max_exact_n: Size threshold for the automatic choice
        block_size: Sources per csgraph call in exact mode

    Returns:
        Diameter in the mesh's length units
    """
    graph = mesh.edge_graph
    n = mesh.n
    if exact is None:
        exact = n <= max_exact_n

    if exact:
        diameter = 0.0
        for start in range(0, n, block_size):
            sources = np.arange(start, min(start + block_size, n))
            dist = csgraph.dijkstra(graph, directed=False, indices=sources)
            diameter = max(diameter, float(dist.max()))
        return diameter

    num_sources = math.ceil(math.sqrt(n))
    nearest = np.full(n, np.inf)
    source = 0
    diameter = 0.0
    for _ in range(num_sources):
        dist = csgraph.dijkstra(graph, directed=False, indices=source)
        diameter = max(diameter, float(dist.max()))
        nearest = np.minimum(nearest, dist)
        source = int(np.argmax(nearest))
    return diameter


# ============================================================================
# Solid tessellation
# ============================================================================

def _switch_number(value: float) -> str:
    """Triangle's switch parser accepts digits and '.', never exponents."""
    return np.format_float_positional(float(value), trim='-')


def _distance_to_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Euclidean distance of each point to the closed polygon outline."""
    a = polygon
    ab = np.roll(polygon, -1, axis=0) - a
    rel = points[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum('pmk,mk->pm', rel, ab) / np.einsum('mk,mk->m', ab, ab), 0.0, 1.0)
    gap = rel - t[:, :, None] * ab[None, :, :]
    return np.sqrt(np.einsum('pmk,pmk->pm', gap, gap).min(axis=1))


def _interior_grid(curve: Curve2D, spacing: float) -> np.ndarray:
    """Square grid points inside the curve, at least spacing / 2 from its outline."""
    lo = curve.points.min(axis=0) + spacing / 2.0
    hi = curve.points.max(axis=0)
    xs = np.arange(lo[0], hi[0], spacing)
    ys = np.arange(lo[1], hi[1], spacing)
    if len(xs) == 0 or len(ys) == 0:
        return np.zeros((0, 2))
    grid = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
    grid = grid[points_in_polygon(grid, curve.points)]
    if len(grid) == 0:
        return grid
    return grid[_distance_to_polygon(grid, curve.points) >= spacing / 2.0]


def _triangulate(curve: Curve2D, steiner: np.ndarray, switches: str) -> Tuple[np.ndarray, np.ndarray]:
    m = curve.m
    segments = np.column_stack([np.arange(m), (np.arange(m) + 1) % m])
    # Triangle writes into its inputs, so it needs fresh writable arrays
    vertices = np.vstack([np.array(curve.points, dtype=np.float64), steiner])
    try:
        result = triangle.triangulate({'vertices': vertices, 'segments': segments}, switches)
    except Exception as e:
        raise DegenerateCurve(f"Triangulation failed: {e}") from e

    out_vertices = np.asarray(result.get('vertices', np.zeros((0, 2))), dtype=np.float64)
    faces = np.asarray(result.get('triangles', np.zeros((0, 3))), dtype=np.int64)
    if len(faces) == 0:
        raise DegenerateCurve("Triangulation produced no triangles")
    if len(out_vertices) < m or not np.array_equal(out_vertices[:m], curve.points):
        raise DegenerateCurve("Triangulation did not preserve the curve points")
    return out_vertices, faces


def tessellate_solid(curve: Curve2D, max_area: Optional[float] = None,
                     min_angle: float = DEFAULT_MIN_ANGLE) -> PlanarSolidMesh:
    """
    Conforming constrained Delaunay triangulation of the curve interior.

    Curve points are kept as boundary vertices and curve segments are never
    split, so every boundary segment is a mesh edge. Interior Steiner points
    start from a grid of spacing sqrt(2 * max_area); triangles still larger
    than max_area (thin ones along long segments) get their centroid added
    and the curve is triangulated again.

    Args:
        curve: Simple CCW curve
        max_area: Maximum triangle area (default: curve area / 1000)
        min_angle: Minimum angle bound in degrees, honored away from the boundary

    Returns:
        PlanarSolidMesh whose boundary_map sends curve index i to its vertex

    Raises:
        DegenerateCurve: If triangulation fails or the area bound is not reached
    """
    if max_area is None:
        max_area = curve.area / DEFAULT_AREA_DIVISOR
    if max_area <= 0:
        raise ValueError(f"max_area must be positive, got {max_area}")

    m = curve.m
    switches = f"pq{_switch_number(min_angle)}a{_switch_number(max_area)}YQ"
    steiner = _interior_grid(curve, math.sqrt(2.0 * max_area))

    for _ in range(MAX_REFINE_ROUNDS):
        vertices, faces = _triangulate(curve, steiner, switches)
        inside = points_in_polygon(vertices[faces].mean(axis=1), curve.points)
        if not np.all(inside):
            logger.warning("Removed %d triangle(s) outside the curve",
                           int(np.count_nonzero(~inside)))
            faces = faces[inside]
        too_large = _triangle_areas(vertices, faces) > max_area
        if not np.any(too_large):
            break
        steiner = np.vstack([vertices[m:], vertices[faces[too_large]].mean(axis=1)])
    else:
        raise DegenerateCurve(
            f"Refinement did not reach max_area {max_area:g} in {MAX_REFINE_ROUNDS} rounds"
        )

    # Steiner points Triangle left unused; curve points are always referenced
    used = np.unique(faces)
    if len(used) < len(vertices):
        if not np.array_equal(used[:m], np.arange(m)):
            raise DegenerateCurve("Triangulation dropped a curve point")
        remap = np.full(len(vertices), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        vertices, faces = vertices[used], remap[faces]

    logger.debug("Tessellated solid: %d vertices, %d triangles", len(vertices), len(faces))
    return PlanarSolidMesh(
        vertices=_frozen(vertices),
        faces=_frozen(faces),
        boundary_map=_frozen(np.arange(m, dtype=np.int64)),
    )
