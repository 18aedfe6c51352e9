"""
Deformation-invariant segmentation and 2D-to-3D region assignment.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List

import numpy as np
from scipy import sparse
from scipy.cluster.vq import ClusterError, kmeans2
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from .errors import DegenerateSegmentation, DimensionMismatch
from .spectral import DescriptorField, SpectralBasis

logger = logging.getLogger(__name__)

DEFAULT_NUM_REGIONS = 6
MIN_REGIONS = 2
MAX_REGIONS = 16
KMEANS_ITERATIONS = 50
KMEANS_RESTARTS = 3


@dataclass(frozen=True, eq=False)
class SegmentLabels:
    """Per-vertex region labels in {0..r-1}."""

    labels: np.ndarray
    r: int

    @property
    def n(self) -> int:
        return len(self.labels)

    def region_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.r)

    def to_list(self) -> List[int]:
        return [int(label) for label in self.labels]

    def to_dict(self) -> Dict[str, Any]:
        return {'r': self.r, 'labels': self.to_list()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SegmentLabels':
        return cls(labels=np.asarray(data['labels'], dtype=np.int64), r=int(data['r']))


@dataclass(frozen=True)
class RegionAssignment:
    """perm[i] is the 3D region matched to 2D region i."""

    perm: tuple
    cost: float

    def apply(self, labels: SegmentLabels) -> SegmentLabels:
        """Relabel 2D regions so matched regions share labels."""
        if labels.r != len(self.perm):
            raise DimensionMismatch(
                f"Assignment has {len(self.perm)} regions, labels have {labels.r}"
            )
        lookup = np.asarray(self.perm, dtype=np.int64)
        return SegmentLabels(labels=lookup[labels.labels], r=labels.r)


# ============================================================================
# Segmentation
# ============================================================================

def _spectral_embedding(basis: SpectralBasis, r: int) -> np.ndarray:
    eigenvalues = basis.eigenvalues[1:r + 1]
    return basis.eigenfunctions[:, 1:r + 1] / np.sqrt(eigenvalues)


def _farthest_point_seeds(points: np.ndarray, r: int, start: int = 0) -> np.ndarray:
    """Farthest-point sampling in embedding space, first seed at `start`."""
    chosen = [start]
    nearest = np.linalg.norm(points - points[start], axis=1)
    for _ in range(1, r):
        index = int(np.argmax(nearest))
        chosen.append(index)
        nearest = np.minimum(nearest, np.linalg.norm(points - points[index], axis=1))
    return np.asarray(chosen)


def _cluster(points: np.ndarray, r: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    seeds = _farthest_point_seeds(points, r)
    for attempt in range(KMEANS_RESTARTS):
        try:
            _, labels = kmeans2(points, points[seeds].copy(), iter=KMEANS_ITERATIONS,
                                minit='matrix', missing='raise')
            return labels.astype(np.int64)
        except ClusterError:
            logger.warning("k-means emptied a cluster (attempt %d); restarting", attempt + 1)
            seeds = rng.choice(len(points), size=r, replace=False)
    raise DegenerateSegmentation(f"k-means could not keep {r} nonempty regions")


def _repair_connectivity(labels: np.ndarray, graph: sparse.spmatrix, r: int) -> np.ndarray:
    """
    Keep the largest connected piece of each label; merge every other piece
    into the label it shares the most edges with.
    """
    labels = labels.copy()
    n = len(labels)
    coo = sparse.coo_matrix(graph)
    rows, cols = coo.row, coo.col

    while True:
        same = labels[rows] == labels[cols]
        same_label_graph = sparse.coo_matrix(
            (np.ones(int(same.sum())), (rows[same], cols[same])), shape=(n, n)
        )
        count, component = connected_components(same_label_graph, directed=False)
        component_label = np.empty(count, dtype=np.int64)
        component_label[component] = labels
        sizes = np.bincount(component, minlength=count)

        kept = np.zeros(count, dtype=bool)
        for label in range(r):
            members = np.flatnonzero(component_label == label)
            if len(members) == 0:
                raise DegenerateSegmentation(f"Region {label} is empty")
            # argmax picks the lowest component id on ties
            kept[members[np.argmax(sizes[members])]] = True
        if kept.all():
            return labels

        border = ~kept[component[rows]] & kept[component[cols]]
        votes = np.zeros((count, r), dtype=np.int64)
        np.add.at(votes, (component[rows[border]], labels[cols[border]]), 1)
        target = np.argmax(votes, axis=1)
        movable = ~kept & (votes.sum(axis=1) > 0)
        logger.debug("Merging %d orphan components", int(movable.sum()))
        move = movable[component]
        labels[move] = target[component[move]]


def segment_shape(basis: SpectralBasis, adjacency: sparse.spmatrix,
                  r: int = DEFAULT_NUM_REGIONS, seed: int = 0) -> SegmentLabels:
    """
    Spectral k-means segmentation with connected regions.

    Args:
        basis: Spectral basis with k > r
        adjacency: Symmetric vertex adjacency (e.g. the mesh edge graph)
        r: Number of regions, 2..16
        seed: Seed for k-means restarts after an empty cluster

    Returns:
        SegmentLabels with r nonempty connected regions

    Raises:
        DegenerateSegmentation: If a region empties
    """
    if not MIN_REGIONS <= r <= MAX_REGIONS:
        raise ValueError(f"Region count must be in [{MIN_REGIONS}, {MAX_REGIONS}], got {r}")
    if basis.k <= r:
        raise ValueError(f"Segmentation into {r} regions needs more than {r} eigenpairs")
    if adjacency.shape != (basis.n, basis.n):
        raise DimensionMismatch(
            f"Adjacency is {adjacency.shape}, basis has {basis.n} vertices"
        )

    embedding = _spectral_embedding(basis, r)
    labels = _cluster(embedding, r, seed)
    labels = _repair_connectivity(labels, adjacency, r)
    logger.debug("Segmented %d vertices into sizes %s", basis.n,
                  np.bincount(labels, minlength=r).tolist())
    return SegmentLabels(labels=labels, r=r)


def region_signatures(labels: SegmentLabels, hks: DescriptorField, wks: DescriptorField,
                      mass: np.ndarray) -> np.ndarray:
    """Mass-weighted mean of [HKS, WKS] rows per region, shape (r, 2d)."""
    if not (labels.n == hks.n == wks.n == len(mass)):
        raise DimensionMismatch(
            f"Inconsistent sizes: labels {labels.n}, hks {hks.n}, wks {wks.n}, mass {len(mass)}"
        )
    features = np.hstack([hks.values, wks.values])
    weights = np.zeros((labels.n, labels.r))
    weights[np.arange(labels.n), labels.labels] = mass
    totals = weights.sum(axis=0)
    if np.any(totals <= 0):
        raise DegenerateSegmentation("Region with zero mass")
    return (weights.T @ features) / totals[:, None]


# ============================================================================
# Assignment
# ============================================================================

def hungarian(cost: np.ndarray) -> RegionAssignment:
    """
    Minimum-cost perfect assignment; among optimal permutations the
    lexicographically smallest one is returned.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise DimensionMismatch(f"Assignment cost must be square, got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("Assignment cost must be finite")

    r = cost.shape[0]
    rows = np.arange(r)
    perm: List[int] = []
    free_cols = list(range(r))
    for row in range(r):
        rest_rows = rows[row + 1:]
        best_col, best_total = free_cols[0], np.inf
        for col in free_cols:
            rest_cols = np.array([c for c in free_cols if c != col], dtype=np.int64)
            candidate = np.empty(r, dtype=np.int64)
            candidate[:row] = perm
            candidate[row] = col
            if len(rest_rows):
                _, sub_cols = linear_sum_assignment(cost[np.ix_(rest_rows, rest_cols)])
                candidate[row + 1:] = rest_cols[sub_cols]
            # Every completion is summed in row order
            total = float(cost[rows, candidate].sum())
            if total < best_total:
                best_col, best_total = col, total
        perm.append(best_col)
        free_cols.remove(best_col)

    total = float(cost[rows, perm].sum())
    return RegionAssignment(perm=tuple(perm), cost=total)


def assign_regions(sig2d: np.ndarray, sig3d: np.ndarray) -> RegionAssignment:
    """Hungarian assignment on pairwise L1 distances of region signatures."""
    if sig2d.shape != sig3d.shape:
        raise DimensionMismatch(
            f"Signature shapes differ: {sig2d.shape} vs {sig3d.shape}"
        )
    assignment = hungarian(cdist(sig2d, sig3d, metric='cityblock'))
    logger.debug("Region assignment %s, cost %.6g", assignment.perm, assignment.cost)
    return assignment
