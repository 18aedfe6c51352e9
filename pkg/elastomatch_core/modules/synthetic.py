"""
Synthetic shapes for tests, benchmarks and the in-repo retrieval set.

Three target classes are built from a subdivided icosahedron: an ellipsoid,
a two-lobed dumbbell and a three-lobed trefoil. Targets are seeded bends and
rigid motions of the class template. Each class has one query curve, made by
cutting the template along its equator plane and projecting the cut onto it;
ground truth is the template vertex behind every curve point.
"""
import itertools
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .geometry_io import Curve2D, TriMesh, save_curve, save_mesh

logger = logging.getLogger(__name__)

CLASSES = ('ellipsoid', 'two_lobe', 'three_lobe')
DEFAULT_LEVEL = 2
DEFAULT_TARGETS_PER_CLASS = 4
QUERY_DIRECTIONS = 64
BEND_AMPLITUDE = 0.35
SYMMETRY_TOL = 1e-9
# Acceptance floor for energy-ranking MAP on the benchmark written by write_benchmark
MAP_THRESHOLD = 0.75


# ============================================================================
# Meshes
# ============================================================================

def icosahedron() -> Tuple[np.ndarray, np.ndarray]:
    """Unit-circumradius icosahedron with outward-oriented faces."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    vertices = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return vertices / np.linalg.norm(vertices, axis=1, keepdims=True), faces


def _refine(vertices: np.ndarray, faces: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """One midpoint subdivision: every triangle becomes four."""
    n = len(vertices)
    edges = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
    adjacency = sparse.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])),
                                  shape=(n, n)).tocsr()
    adjacency.data[:] = 1.0
    adjacency.sort_indices()
    # new vertex index per edge, in CSR order
    adjacency.data = np.arange(n, n + adjacency.nnz, dtype=np.float64)
    rows, cols = adjacency.nonzero()
    midpoints = 0.5 * (vertices[rows] + vertices[cols])
    lookup = adjacency + adjacency.T

    def mid(a, b):
        return np.asarray(lookup[a, b]).ravel().astype(np.int64)

    e1 = mid(faces[:, 0], faces[:, 1])
    e2 = mid(faces[:, 1], faces[:, 2])
    e3 = mid(faces[:, 2], faces[:, 0])
    new_faces = np.concatenate([
        np.column_stack([faces[:, 0], e1, e3]),
        np.column_stack([faces[:, 1], e2, e1]),
        np.column_stack([faces[:, 2], e3, e2]),
        np.column_stack([e1, e2, e3]),
    ])
    return np.vstack([vertices, midpoints]), new_faces


def icosphere(level: int = DEFAULT_LEVEL) -> TriMesh:
    """Subdivided icosahedron projected to the unit sphere (10 * 4^level + 2 vertices)."""
    vertices, faces = icosahedron()
    for _ in range(level):
        vertices, faces = _refine(vertices, faces)
        vertices = vertices / np.linalg.norm(vertices, axis=1, keepdims=True)
    return TriMesh.from_arrays(vertices, faces)


def _class_map(points: np.ndarray, shape_class: str) -> np.ndarray:
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    if shape_class == 'ellipsoid':
        return np.column_stack([1.8 * x, y, 0.7 * z])
    if shape_class == 'two_lobe':
        rho = 0.5 + 0.6 * x ** 2
        return np.column_stack([2.0 * x, rho * y, 0.8 * rho * z])
    if shape_class == 'three_lobe':
        scale = 1.0 + 0.6 * np.cos(3.0 * np.arctan2(y, x))
        return np.column_stack([1.3 * scale * x, 1.3 * scale * y, 0.6 * z])
    raise ValueError(f"Unknown shape class: {shape_class}")


def class_template(shape_class: str, level: int = DEFAULT_LEVEL) -> TriMesh:
    """Undeformed template mesh of a class."""
    sphere = icosphere(level)
    return TriMesh.from_arrays(_class_map(np.asarray(sphere.vertices), shape_class), sphere.faces)


def deform(mesh: TriMesh, seed: int, amplitude: float = BEND_AMPLITUDE) -> TriMesh:
    """Seeded near-isometric bend along the x axis followed by a rigid motion."""
    rng = np.random.default_rng(seed)
    vertices = np.asarray(mesh.vertices).copy()
    angle = rng.uniform(-amplitude, amplitude)
    extent = max(float(np.abs(vertices[:, 0]).max()), 1e-12)
    # rotate each x-slab about the y axis by an angle growing with x
    theta = angle * vertices[:, 0] / extent
    x, z = vertices[:, 0], vertices[:, 2]
    vertices[:, 0] = x * np.cos(theta) - z * np.sin(theta)
    vertices[:, 2] = x * np.sin(theta) + z * np.cos(theta)

    rotation = Rotation.from_euler('zyx', rng.uniform(-math.pi, math.pi, size=3)).as_matrix()
    translation = rng.normal(scale=0.5, size=3)
    bent = TriMesh.from_arrays(vertices, mesh.faces)
    return bent.transformed(rotation, translation)


def cut_and_project_query(shape_class: str, level: int = DEFAULT_LEVEL,
                          directions: int = QUERY_DIRECTIONS) -> Tuple[Curve2D, List[int]]:
    """
    Query curve of a class and its ground-truth template vertices.

    Equator directions pick their nearest sphere vertices; the class map of
    those vertices, projected onto the xy plane and ordered by angle, forms
    the curve.
    """
    sphere = icosphere(level)
    angles = 2.0 * math.pi * np.arange(directions) / directions
    targets = np.column_stack([np.cos(angles), np.sin(angles), np.zeros(directions)])
    nearest = np.argmax(targets @ np.asarray(sphere.vertices).T, axis=1)
    picked = np.unique(nearest)

    projected = _class_map(np.asarray(sphere.vertices)[picked], shape_class)[:, :2]
    order = np.argsort(np.arctan2(projected[:, 1], projected[:, 0]), kind='stable')
    curve = Curve2D.from_points(projected[order])
    truth = [int(v) for v in picked[order]]
    if curve.m != len(truth):
        raise ValueError(f"Projection of class {shape_class} merged query points")
    # angular order is counter-clockwise, so Curve2D keeps the point order
    return curve, truth


def template_symmetries(shape_class: str, level: int = DEFAULT_LEVEL) -> List[np.ndarray]:
    """
    Vertex permutations of a class template under its coordinate-reflection
    isometries (identity excluded).

    A sign flip of the sphere axes qualifies when it maps sphere vertices onto
    sphere vertices and commutes with the class map.
    """
    sphere = np.asarray(icosphere(level).vertices)
    mapped = _class_map(sphere, shape_class)
    tree = cKDTree(sphere)
    permutations = []
    for signs in itertools.product((1.0, -1.0), repeat=3):
        if signs == (1.0, 1.0, 1.0):
            continue
        flip = np.array(signs)
        gap, perm = tree.query(sphere * flip)
        if gap.max() > SYMMETRY_TOL:
            continue
        if np.abs(mapped[perm] - mapped * flip).max() > SYMMETRY_TOL:
            continue
        permutations.append(perm.astype(np.int64))
    return permutations


def symmetric_truths(shape_class: str, truth: Sequence[int],
                     level: int = DEFAULT_LEVEL) -> List[List[int]]:
    """Ground truth of a query mapped through every template symmetry."""
    return [[int(perm[v]) for v in truth] for perm in template_symmetries(shape_class, level)]


def torus_mesh(a: int, b: int, major: float = 1.0, minor: float = 0.4) -> TriMesh:
    """Regular a x b torus grid (n = a * b vertices)."""
    if a < 3 or b < 3:
        raise ValueError("Torus grid needs at least 3 x 3 vertices")
    u = 2.0 * math.pi * np.arange(a) / a
    v = 2.0 * math.pi * np.arange(b) / b
    uu, vv = np.meshgrid(u, v, indexing='ij')
    ring = major + minor * np.cos(vv)
    vertices = np.column_stack([
        (ring * np.cos(uu)).ravel(), (ring * np.sin(uu)).ravel(), (minor * np.sin(vv)).ravel()
    ])
    i, j = np.meshgrid(np.arange(a), np.arange(b), indexing='ij')
    i, j = i.ravel(), j.ravel()
    p00 = i * b + j
    p10 = ((i + 1) % a) * b + j
    p01 = i * b + (j + 1) % b
    p11 = ((i + 1) % a) * b + (j + 1) % b
    faces = np.concatenate([np.column_stack([p00, p10, p11]), np.column_stack([p00, p11, p01])])
    return TriMesh.from_arrays(vertices, faces)


def grid_for_size(n: int) -> Tuple[int, int]:
    """Torus grid dimensions with a * b close to n and a about 2.5 b."""
    b = max(3, int(round(math.sqrt(n / 2.5))))
    a = max(3, int(round(n / b)))
    return a, b


def star_curve(m: int, seed: int = 0, jitter: float = 0.3) -> Curve2D:
    """Random star-shaped polygon with m vertices."""
    if m < 3:
        raise ValueError("Curve needs at least 3 vertices")
    rng = np.random.default_rng(seed)
    angles = 2.0 * math.pi * (np.arange(m) + rng.uniform(-0.3, 0.3, size=m)) / m
    radii = 1.0 + jitter * rng.uniform(-1.0, 1.0, size=m)
    return Curve2D.from_points(np.column_stack([radii * np.cos(angles), radii * np.sin(angles)]))


def planted_walk(mesh: TriMesh, m: int, seed: int = 0) -> List[int]:
    """
    Closed walk of m layers: a random mesh walk out and the same walk back.

    Returns:
        Mesh vertex per layer 0..m-1; layer m repeats layer 0
    """
    rng = np.random.default_rng(seed)
    half = m // 2
    walk = [int(rng.integers(mesh.n))]
    for _ in range(half):
        around = mesh.adjacency[walk[-1]]
        walk.append(int(around[rng.integers(len(around))]))
    walk.extend(walk[m - i] for i in range(half + 1, m))
    return walk


def planted_cost(walk: Sequence[int], n: int) -> np.ndarray:
    """Cost matrix that is 0 on the walk and 1 elsewhere."""
    D = np.ones((len(walk), n))
    D[np.arange(len(walk)), np.asarray(walk)] = 0.0
    return D


# ============================================================================
# Benchmark writer
# ============================================================================

def write_benchmark(directory: str, seed: int = 0,
                    targets_per_class: int = DEFAULT_TARGETS_PER_CLASS,
                    level: int = DEFAULT_LEVEL,
                    classes: Sequence[str] = CLASSES) -> Dict[str, Any]:
    """
    Write the synthetic retrieval benchmark.

    Layout:
        meshes/<class>_<k>.off       deformed targets
        queries/<class>_query.csv    one query per class
        ground_truth/<class>_query.json
        ground_truth/<class>_query_symmetric.json   truth under each template symmetry
        labels.json                  class of every target and query
        manifest.json

    Args:
        directory: Output directory (created if missing)
        seed: Base seed of the deformations
        targets_per_class: Deformed targets per class
        level: Icosphere subdivision level

    Returns:
        Manifest dictionary
    """
    root = Path(directory)
    for sub in ('meshes', 'queries', 'ground_truth'):
        (root / sub).mkdir(parents=True, exist_ok=True)

    labels: Dict[str, str] = {}
    targets: List[str] = []
    queries: List[Dict[str, str]] = []
    for c, shape_class in enumerate(classes):
        template = class_template(shape_class, level)
        for k in range(targets_per_class):
            name = f"{shape_class}_{k}"
            target_seed = seed * 1000 + c * targets_per_class + k
            save_mesh(deform(template, target_seed), str(root / 'meshes' / f"{name}.off"))
            labels[name] = shape_class
            targets.append(f"meshes/{name}.off")

        curve, truth = cut_and_project_query(shape_class, level)
        query_name = f"{shape_class}_query"
        save_curve(curve, str(root / 'queries' / f"{query_name}.csv"))
        with open(root / 'ground_truth' / f"{query_name}.json", 'w', encoding='utf-8') as f:
            json.dump(truth, f)
        with open(root / 'ground_truth' / f"{query_name}_symmetric.json", 'w', encoding='utf-8') as f:
            json.dump(symmetric_truths(shape_class, truth, level), f)
        labels[query_name] = shape_class
        queries.append({
            'query': f"queries/{query_name}.csv",
            'ground_truth': f"ground_truth/{query_name}.json",
            'symmetric_ground_truth': f"ground_truth/{query_name}_symmetric.json",
            'class': shape_class,
        })

    with open(root / 'labels.json', 'w', encoding='utf-8') as f:
        json.dump(labels, f, indent=2, sort_keys=True)

    manifest = {
        'seed': seed,
        'level': level,
        'classes': list(classes),
        'targets': targets,
        'queries': queries,
        'labels': 'labels.json',
        'map_threshold': MAP_THRESHOLD,
    }
    with open(root / 'manifest.json', 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2)

    logger.info("Wrote benchmark: %d targets, %d queries to %s", len(targets), len(queries), root)
    return manifest
