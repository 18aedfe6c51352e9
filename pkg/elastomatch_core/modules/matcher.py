"""
Globally optimal elastic matching of a closed 2D curve to a 3D mesh.

A matching is a closed path in the product graph of curve and mesh: layers
0..m hold one copy of the mesh per curve vertex (layer m duplicates layer 0).
Edges stay within a layer along a mesh edge, or advance one layer either at
the same mesh vertex or along a mesh edge. The product graph is never
materialized; edge costs are generated per layer from the cost matrix.
"""
import heapq
import logging
import threading
import time
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import count
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .cost import CostMatrix
from .errors import DimensionMismatch, NotAnEdge
from .geodesics import GeodesicProvider, create_geodesic_provider
from .geometry_io import Curve2D, TriMesh

logger = logging.getLogger(__name__)

# Per-layer edge weight lists are kept when m * directed edges stays below this
LAYER_CACHE_MAX_ENTRIES = 4_000_000

ProductVertex = namedtuple('ProductVertex', ['i', 'j'])


# ============================================================================
# Result types
# ============================================================================

@dataclass(frozen=True)
class MatchPath:
    """Product-graph path from layer 0 to layer m with its summed edge cost."""

    vertices: Tuple[ProductVertex, ...]
    energy: float

    @property
    def start(self) -> int:
        return self.vertices[0].j

    @property
    def end(self) -> int:
        return self.vertices[-1].j

    @property
    def is_closed(self) -> bool:
        return self.start == self.end

    def validate(self, mesh: TriMesh, m: int) -> Tuple[bool, str]:
        """
        Check closedness, edge rules and layer monotonicity.

        Returns:
            Tuple of (is_valid, error_message)
        """
        if not self.vertices:
            return False, "Empty path"
        first, last = self.vertices[0], self.vertices[-1]
        if first.i != 0 or last.i != m:
            return False, f"Path runs from layer {first.i} to {last.i}, expected 0 to {m}"
        if first.j != last.j:
            return False, f"Path is open: starts at {first.j}, ends at {last.j}"
        for a, b in zip(self.vertices, self.vertices[1:]):
            if not 0 <= b.j < mesh.n:
                return False, f"Vertex {b} out of range"
            if not _is_edge(a, b, mesh, m):
                return False, f"{a} -> {b} is not a product-graph edge"
        return True, ""

    def to_list(self) -> List[List[int]]:
        return [[int(v.i), int(v.j)] for v in self.vertices]


@dataclass(frozen=True)
class RegionNode:
    region: Tuple[int, ...]
    bound: float


@dataclass
class MatchStats:
    paths_solved: int = 0
    heap_pops: int = 0
    wall_time: float = 0.0
    trace: List[RegionNode] = field(default_factory=list)

    def to_dict(self, include_wall_time: bool = True) -> Dict[str, Any]:
        data = {'paths_solved': self.paths_solved, 'heap_pops': self.heap_pops}
        if include_wall_time:
            data['wall_time'] = self.wall_time
        return data


@dataclass(frozen=True)
class MatchResult:
    path: MatchPath
    correspondences: Tuple[Tuple[int, ...], ...]
    stats: MatchStats

    @property
    def energy(self) -> float:
        return self.path.energy

    def to_dict(self, include_wall_time: bool = True) -> Dict[str, Any]:
        return {
            'energy': self.path.energy,
            'path': self.path.to_list(),
            'correspondences': [list(map(int, group)) for group in self.correspondences],
            'stats': self.stats.to_dict(include_wall_time),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MatchResult':
        path = MatchPath(
            vertices=tuple(ProductVertex(int(i), int(j)) for i, j in data['path']),
            energy=float(data['energy']),
        )
        stats = data.get('stats', {})
        return cls(
            path=path,
            correspondences=tuple(tuple(group) for group in data['correspondences']),
            stats=MatchStats(paths_solved=stats.get('paths_solved', 0),
                             heap_pops=stats.get('heap_pops', 0),
                             wall_time=stats.get('wall_time', 0.0)),
        )


def correspondences_from_path(path: MatchPath, m: int) -> Tuple[Tuple[int, ...], ...]:
    """Mesh vertices visited in each layer 0..m-1, consecutive repeats removed."""
    groups: List[List[int]] = [[] for _ in range(m)]
    for vertex in path.vertices:
        if vertex.i >= m:
            continue
        group = groups[vertex.i]
        if not group or group[-1] != vertex.j:
            group.append(vertex.j)
    return tuple(tuple(group) for group in groups)


# ============================================================================
# Scalar edge model
# ============================================================================

def _cost_array(D: Union[CostMatrix, np.ndarray]) -> np.ndarray:
    return np.asarray(D.D if isinstance(D, CostMatrix) else D, dtype=np.float64)


def _adjacent(mesh: TriMesh, a: int, b: int) -> bool:
    row = mesh.adjacency[a]
    k = int(np.searchsorted(row, b))
    return k < len(row) and int(row[k]) == b


def _is_edge(a: ProductVertex, b: ProductVertex, mesh: TriMesh, m: int) -> bool:
    if not (0 <= a.i <= m and 0 <= b.i <= m):
        return False
    if b.i == a.i:
        return a.i < m and a.j != b.j and _adjacent(mesh, a.j, b.j)
    if b.i == a.i + 1:
        return a.j == b.j or _adjacent(mesh, a.j, b.j)
    return False


def edge_cost(a: ProductVertex, b: ProductVertex, D: Union[CostMatrix, np.ndarray],
              curve: Curve2D, mesh: TriMesh) -> float:
    """
    Trapezoidal cost of one product edge: mean of the two D entries times the
    Euclidean length of the edge in the joint (2D, 3D) coordinate space.

    Raises:
        NotAnEdge: If (a, b) breaks the edge rules
    """
    m = curve.m
    if not _is_edge(a, b, mesh, m):
        raise NotAnEdge(f"{tuple(a)} -> {tuple(b)} is not a product-graph edge")
    cost = _cost_array(D)
    ia, ib = a.i % m, b.i % m
    delta = np.concatenate([
        curve.points[ia] - curve.points[ib],
        mesh.vertices[a.j] - mesh.vertices[b.j],
    ])
    return float((cost[ia, a.j] + cost[ib, b.j]) / 2.0 * np.linalg.norm(delta))


def neighbors(v: ProductVertex, adjacency: Sequence[np.ndarray], m: int,
              n: int) -> List[ProductVertex]:
    """Successors of v: same-layer mesh neighbors, then (i+1, j), then (i+1, neighbors)."""
    if not 0 <= v.j < n or not 0 <= v.i <= m:
        raise ValueError(f"Product vertex {tuple(v)} out of range")
    if v.i == m:
        return []
    around = [int(j) for j in adjacency[v.j]]
    out = [ProductVertex(v.i, j) for j in around]
    out.append(ProductVertex(v.i + 1, v.j))
    out.extend(ProductVertex(v.i + 1, j) for j in around)
    return out


# ============================================================================
# Product graph
# ============================================================================

class ProductGraph:
    """
    Implicit product graph with vectorized per-layer edge costs.

    Safe to share between threads; each shortest-path run owns its arrays.
    """

    def __init__(self, D: Union[CostMatrix, np.ndarray], curve: Curve2D, mesh: TriMesh):
        self.D = _cost_array(D)
        if self.D.shape != (curve.m, mesh.n):
            raise DimensionMismatch(
                f"Cost matrix is {self.D.shape}, expected ({curve.m}, {mesh.n})"
            )
        self.curve = curve
        self.mesh = mesh
        self.m = curve.m
        self.n = mesh.n

        graph = mesh.edge_graph
        self.indptr = graph.indptr
        self.indices = graph.indices
        self.lengths = graph.data
        self.rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        self._indptr_list = self.indptr.tolist()
        self._indices_list = self.indices.tolist()
        if np.any(np.diff(self.indptr) == 0):
            raise ValueError("Mesh has isolated vertices")

        # |x_{i+1} - x_i| for each layer transition, wrapping at m
        self.steps = curve.segment_lengths
        self._cache_layers = self.m * len(self.indices) <= LAYER_CACHE_MAX_ENTRIES
        self._layer_cache: Dict[int, List[float]] = {}
        self._lock = threading.Lock()

    def layer_weights(self, layer: int) -> List[float]:
        """In-layer edge costs in CSR order for curve vertex `layer`."""
        if self._cache_layers:
            with self._lock:
                cached = self._layer_cache.get(layer)
            if cached is not None:
                return cached
        row = self.D[layer]
        weights = ((row[self.rows] + row[self.indices]) / 2.0 * self.lengths).tolist()
        if self._cache_layers:
            with self._lock:
                self._layer_cache[layer] = weights
        return weights

    def _relax_layer(self, layer: int, dist: np.ndarray, parent: np.ndarray,
                     same_layer: np.ndarray) -> Tuple[np.ndarray, int]:
        """Dijkstra within one layer, seeded by the incoming distances."""
        weights = self.layer_weights(layer)
        indptr = self._indptr_list
        indices = self._indices_list
        dist_list = dist.tolist()
        parent_list = parent.tolist()
        same_list = same_layer.tolist()
        done = [False] * self.n
        heap = [(d, j) for j, d in enumerate(dist_list) if d != np.inf]
        heapq.heapify(heap)
        pops = 0

        while heap:
            d, u = heapq.heappop(heap)
            pops += 1
            if done[u]:
                continue
            done[u] = True
            for e in range(indptr[u], indptr[u + 1]):
                v = indices[e]
                if done[v]:
                    continue
                candidate = d + weights[e]
                if candidate < dist_list[v]:
                    dist_list[v] = candidate
                    parent_list[v] = u
                    same_list[v] = True
                    heapq.heappush(heap, (candidate, v))

        parent[:] = parent_list
        same_layer[:] = same_list
        return np.asarray(dist_list), pops

    def _advance(self, i: int, dist: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Distances into layer i+1 through vertical and diagonal edges."""
        here, there = i % self.m, (i + 1) % self.m
        D_here, D_there = self.D[here], self.D[there]
        step = self.steps[here]

        vertical = dist + (D_here + D_there) / 2.0 * step

        # Rows of the symmetric CSR act as destinations, indices as sources
        src = self.indices
        diagonal = dist[src] + (D_here[src] + D_there[self.rows]) / 2.0 * np.hypot(step, self.lengths)
        starts = self.indptr[:-1]
        best = np.minimum.reduceat(diagonal, starts)
        hit = diagonal == np.repeat(best, np.diff(self.indptr))
        position = np.where(hit, np.arange(len(diagonal)), len(diagonal))
        best_src = src[np.minimum.reduceat(position, starts)]

        j = np.arange(self.n)
        take_vertical = (vertical < best) | ((vertical == best) & (j <= best_src))
        return np.where(take_vertical, vertical, best), np.where(take_vertical, j, best_src)

    def shortest_path(self, region: Sequence[int]) -> Tuple[MatchPath, int]:
        """
        Cheapest path from {0} x region to {m} x region.

        Returns:
            Tuple of (open MatchPath, heap pop count)
        """
        region = np.unique(np.asarray(region, dtype=np.int64))
        if len(region) == 0:
            raise ValueError("Region must be nonempty")
        if region[0] < 0 or region[-1] >= self.n:
            raise ValueError("Region vertex out of range")

        m, n = self.m, self.n
        parent = np.full((m + 1, n), -1, dtype=np.int64)
        same_layer = np.zeros((m + 1, n), dtype=bool)

        dist = np.full(n, np.inf)
        dist[region] = 0.0
        pops = 0
        for i in range(m):
            dist, layer_pops = self._relax_layer(i, dist, parent[i], same_layer[i])
            pops += layer_pops
            dist, parent[i + 1] = self._advance(i, dist)

        # Layer m is a sink: no in-layer relaxation
        end = int(region[np.argmin(dist[region])])
        energy = float(dist[end])

        vertices = [ProductVertex(m, end)]
        i, j = m, end
        while parent[i, j] >= 0:
            if same_layer[i, j]:
                j = int(parent[i, j])
            else:
                j = int(parent[i, j])
                i -= 1
            vertices.append(ProductVertex(i, j))
        vertices.reverse()
        return MatchPath(vertices=tuple(vertices), energy=energy), pops


def shortest_path_region(R: Sequence[int], D: Union[CostMatrix, np.ndarray],
                         curve: Curve2D, mesh: TriMesh) -> MatchPath:
    """Minimum-cost path from any (0, j) to any (m, j'), with j, j' in R."""
    path, _ = ProductGraph(D, curve, mesh).shortest_path(R)
    return path


# ============================================================================
# Solvers
# ============================================================================

def exhaustive_match(D: Union[CostMatrix, np.ndarray], curve: Curve2D, mesh: TriMesh,
                     threads: int = 1) -> MatchResult:
    """
    One closed shortest path per start vertex; the winner minimizes (energy, j).

    Args:
        D: m x n cost matrix
        curve: Query curve
        mesh: Target mesh
        threads: Worker threads for the n independent solves
    """
    started = time.perf_counter()
    graph = ProductGraph(D, curve, mesh)
    starts = range(graph.n)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            solved = list(executor.map(lambda j: graph.shortest_path([j]), starts))
    else:
        solved = [graph.shortest_path([j]) for j in starts]

    best_j = min(starts, key=lambda j: (solved[j][0].energy, j))
    path = solved[best_j][0]
    stats = MatchStats(
        paths_solved=graph.n,
        heap_pops=sum(pops for _, pops in solved),
        wall_time=time.perf_counter() - started,
    )
    logger.info("Exhaustive match: energy %.6g at vertex %d (%d solves, %.2fs)",
                path.energy, best_j, stats.paths_solved, stats.wall_time)
    return MatchResult(path=path, correspondences=correspondences_from_path(path, graph.m),
                       stats=stats)


class _Incumbent:
    """Best closed path so far; only ever decreases."""

    def __init__(self):
        self.energy = np.inf
        self.path: Optional[MatchPath] = None
        self._lock = threading.Lock()

    def offer(self, path: MatchPath) -> bool:
        with self._lock:
            if path.energy < self.energy:
                self.energy = path.energy
                self.path = path
                return True
            return False

    def value(self) -> float:
        with self._lock:
            return self.energy


def branch_and_bound_match(D: Union[CostMatrix, np.ndarray], curve: Curve2D, mesh: TriMesh,
                           geodesics: Optional[GeodesicProvider] = None,
                           threads: int = 1, record_trace: bool = False) -> MatchResult:
    """
    Branch-and-bound over start regions.

    Regions are popped in bound order and solved with a multi-source shortest
    path. A closed path is a candidate; an open one splits its region by
    geodesic proximity to its two endpoints (ties to the start side), and
    both halves inherit the path cost as their bound. The search continues
    until no queued bound is below the incumbent.

    Args:
        D: m x n cost matrix
        curve: Query curve
        mesh: Target mesh
        geodesics: Distance provider for splits (default: created for the mesh)
        threads: If > 1, both children of a split are solved speculatively
        record_trace: Keep every popped RegionNode in stats.trace

    Returns:
        MatchResult with the globally optimal closed path
    """
    started = time.perf_counter()
    graph = ProductGraph(D, curve, mesh)
    if geodesics is None:
        geodesics = create_geodesic_provider(mesh)

    stats = MatchStats()
    incumbent = _Incumbent()
    order = count()
    root = tuple(range(graph.n))
    queue = [(0.0, next(order), root)]
    pending = {}
    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    try:
        while queue and queue[0][0] < incumbent.value():
            bound, key, region = heapq.heappop(queue)
            if record_trace:
                stats.trace.append(RegionNode(region=region, bound=bound))

            future = pending.pop(key, None)
            path, pops = future.result() if future is not None else graph.shortest_path(region)
            stats.paths_solved += 1
            stats.heap_pops += pops

            if path.energy >= incumbent.value():
                continue
            if path.is_closed:
                incumbent.offer(path)
                logger.debug("Candidate at vertex %d with energy %.6g", path.start, path.energy)
                continue

            members = np.asarray(region)
            to_start = geodesics.distances(path.start)[members]
            to_end = geodesics.distances(path.end)[members]
            near_start = to_start <= to_end
            for child in (members[near_start], members[~near_start]):
                child = tuple(int(j) for j in child)
                child_key = next(order)
                heapq.heappush(queue, (path.energy, child_key, child))
                if executor is not None:
                    pending[child_key] = executor.submit(graph.shortest_path, child)
    finally:
        if executor is not None:
            for future in pending.values():
                future.cancel()
            executor.shutdown(wait=True)

    path = incumbent.path
    stats.wall_time = time.perf_counter() - started
    logger.info("Branch-and-bound match: energy %.6g at vertex %d (%d solves, %.2fs)",
                path.energy, path.start, stats.paths_solved, stats.wall_time)
    return MatchResult(path=path, correspondences=correspondences_from_path(path, graph.m),
                       stats=stats)


SOLVERS = {
    'exhaustive': exhaustive_match,
    'bnb': branch_and_bound_match,
}
