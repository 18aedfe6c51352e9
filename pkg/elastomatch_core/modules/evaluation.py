"""
Evaluation: geodesic matching error, cumulative error curves, energy-based
retrieval with AP/MAP, and the ShapeDNA and segment-cost baselines.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np

from .errors import MissingGroundTruth, NoPositives
from .geodesics import GeodesicProvider, create_geodesic_provider
from .geometry_io import Curve2D, TriMesh
from .matcher import MatchResult
from .segmentation import assign_regions
from .shape_processor import QueryFeatures, ShapeProcessor, TargetFeatures
from .spectral import SpectralBasis

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = np.linspace(0.0, 1.0, 101)
GROUP_MODES = ('first', 'min')


@dataclass(frozen=True, eq=False)
class ErrorProfile:
    """Per-curve-vertex errors in [0, 1] and their cumulative curve."""

    errors: np.ndarray
    thresholds: np.ndarray
    fractions: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.errors.mean())

    def to_rows(self) -> List[List[float]]:
        return [[float(t), float(f)] for t, f in zip(self.thresholds, self.fractions)]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'errors': self.errors.tolist(),
            'thresholds': self.thresholds.tolist(),
            'fractions': self.fractions.tolist(),
            'mean_error': self.mean,
        }


@dataclass(frozen=True)
class RankedTarget:
    target_id: str
    score: float
    label: Optional[str] = None


@dataclass(frozen=True)
class RetrievalRanking:
    """Targets sorted by ascending score (lower is more similar)."""

    query_id: str
    targets: tuple
    query_label: Optional[str] = None

    def to_rows(self) -> List[List[Any]]:
        return [[rank, t.target_id, t.score, t.label or '']
                for rank, t in enumerate(self.targets, 1)]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'query': self.query_id,
            'query_class': self.query_label,
            'ranking': [
                {'rank': rank, 'target': t.target_id, 'score': t.score, 'class': t.label}
                for rank, t in enumerate(self.targets, 1)
            ],
        }


# ============================================================================
# Matching error
# ============================================================================

def cumulative_curve(errors: Sequence[float],
                     thresholds: Optional[Sequence[float]] = None) -> np.ndarray:
    """Fraction of errors at or below each threshold."""
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise ValueError("Cumulative curve needs at least one error")
    thresholds = DEFAULT_THRESHOLDS if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    return np.mean(errors[None, :] <= thresholds[:, None], axis=1)


def _vertex_errors(groups: Sequence[Sequence[int]], ground_truth: Sequence[int],
                   provider: GeodesicProvider, group_mode: str) -> np.ndarray:
    errors = np.empty(len(groups))
    for i, (group, truth) in enumerate(zip(groups, ground_truth)):
        dist = provider.distances(int(truth))
        if group_mode == 'first':
            errors[i] = dist[group[0]]
        else:
            errors[i] = dist[list(group)].min()
    return errors


def _check_truth(ground_truth: Sequence[Optional[int]], m: int, n: int):
    if len(ground_truth) != m:
        raise MissingGroundTruth(f"Ground truth has {len(ground_truth)} entries, curve has {m}")
    for i, vertex in enumerate(ground_truth):
        if vertex is None or not 0 <= int(vertex) < n:
            raise MissingGroundTruth(f"No valid ground truth for curve vertex {i}")


def matching_error(result: MatchResult, ground_truth: Sequence[Optional[int]], mesh: TriMesh,
                   diameter: Optional[float] = None,
                   provider: Optional[GeodesicProvider] = None,
                   group_mode: str = 'first',
                   thresholds: Optional[Sequence[float]] = None,
                   symmetric_truths: Sequence[Sequence[int]] = ()) -> ErrorProfile:
    """
    Geodesic error of each curve vertex's match, normalized by the mesh diameter.

    With symmetric_truths (the ground truth mapped through isometries of the
    mesh), the whole match is scored against whichever truth gives the lowest
    mean error, so a mirrored match of a symmetric shape counts as correct.

    Args:
        result: Matching result on `mesh`
        ground_truth: True mesh vertex for every curve vertex
        mesh: Target mesh the result refers to
        diameter: Geodesic diameter (default: from the provider)
        provider: Geodesic distances on `mesh`
        group_mode: 'first' evaluates the first vertex a curve vertex maps to,
            'min' the closest vertex of its group
        thresholds: Grid of the cumulative curve
        symmetric_truths: Alternative ground truths, one per symmetry

    Returns:
        ErrorProfile

    Raises:
        MissingGroundTruth: If a curve vertex has no valid ground truth
    """
    if group_mode not in GROUP_MODES:
        raise ValueError(f"Unknown group mode: {group_mode}")
    groups = result.correspondences
    m = len(groups)
    truths = [ground_truth, *symmetric_truths]
    for truth in truths:
        _check_truth(truth, m, mesh.n)

    if provider is None:
        provider = create_geodesic_provider(mesh)
    if diameter is None:
        diameter = provider.diameter()
    if diameter <= 0:
        raise ValueError("Diameter must be positive")

    candidates = [_vertex_errors(groups, truth, provider, group_mode) for truth in truths]
    best = int(np.argmin([errors.mean() for errors in candidates]))
    if best:
        logger.debug("Match scored against symmetric ground truth %d", best)
    errors = np.clip(candidates[best] / diameter, 0.0, 1.0)

    grid = DEFAULT_THRESHOLDS if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    return ErrorProfile(errors=errors, thresholds=grid, fractions=cumulative_curve(errors, grid))


def sensitivity_curves(curve: Curve2D, mesh: TriMesh, ground_truth: Sequence[int],
                       ks: Sequence[int], solver: str = 'bnb', use_segments: bool = True,
                       threads: int = 1, group_mode: str = 'first',
                       symmetric_truths: Sequence[Sequence[int]] = (),
                       **processor_settings) -> Dict[int, ErrorProfile]:
    """
    Matching error as a function of the number of eigenfunctions.

    Features of both shapes are recomputed for every k with otherwise
    identical settings.

    Args:
        curve: Query curve
        mesh: Target mesh
        ground_truth: True mesh vertex per curve vertex
        ks: Eigenfunction counts to evaluate
        solver: 'bnb' or 'exhaustive'
        use_segments: Gate costs by region assignment
        threads: Worker threads for the solver
        group_mode: Passed to matching_error
        symmetric_truths: Passed to matching_error
        **processor_settings: Other ShapeProcessor arguments

    Returns:
        Dictionary mapping k to its ErrorProfile
    """
    profiles = {}
    for k in ks:
        processor = ShapeProcessor(k=k, **processor_settings)
        query = processor.process_curve(curve)
        target = processor.process_mesh(mesh)
        pair = processor.match_pair(query, target, solver=solver,
                                    use_segments=use_segments, threads=threads)
        profiles[k] = matching_error(pair.result, ground_truth, target.mesh,
                                     provider=target.geodesics, group_mode=group_mode,
                                     symmetric_truths=symmetric_truths)
        logger.info("k=%d: mean error %.4f", k, profiles[k].mean)
    return profiles


# ============================================================================
# Retrieval
# ============================================================================

def rank_by_scores(query_id: str, scores: Mapping[str, float],
                   labels: Optional[Mapping[str, str]] = None,
                   query_label: Optional[str] = None) -> RetrievalRanking:
    """Sort targets by ascending score; ties break by target id."""
    labels = labels or {}
    ordered = sorted(scores.items(), key=lambda item: (item[1], item[0]))
    return RetrievalRanking(
        query_id=query_id,
        targets=tuple(RankedTarget(target_id=tid, score=float(score), label=labels.get(tid))
                      for tid, score in ordered),
        query_label=query_label,
    )


def retrieval_rank(query: QueryFeatures, targets: Sequence[TargetFeatures],
                   processor: ShapeProcessor, solver: str = 'bnb', use_segments: bool = True,
                   threads: int = 1, labels: Optional[Mapping[str, str]] = None,
                   query_label: Optional[str] = None) -> RetrievalRanking:
    """
    Rank targets by optimal matching energy.

    Args:
        query: Query features
        targets: Target features with unique names
        processor: Processor holding the matching settings (tau)
        solver: 'bnb' or 'exhaustive'
        use_segments: Gate costs by region assignment
        threads: Targets matched concurrently
        labels: Optional class label per target name
        query_label: Optional class label of the query

    Returns:
        RetrievalRanking
    """
    names = [target.name for target in targets]
    if len(set(names)) != len(names):
        raise ValueError("Target names must be unique")

    def energy(target: TargetFeatures) -> float:
        return processor.match_pair(query, target, solver=solver,
                                    use_segments=use_segments).result.energy

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            energies = list(executor.map(energy, targets))
    else:
        energies = [energy(target) for target in targets]
    return rank_by_scores(query.name, dict(zip(names, energies)), labels, query_label)


def average_precision(ranking: RetrievalRanking, positive_class: Optional[str] = None) -> float:
    """
    Mean over positive ranks of precision at that rank.

    Raises:
        NoPositives: If no target carries the positive class
    """
    positive_class = ranking.query_label if positive_class is None else positive_class
    hits = 0
    precisions = []
    for rank, target in enumerate(ranking.targets, 1):
        if target.label is not None and target.label == positive_class:
            hits += 1
            precisions.append(hits / rank)
    if not precisions:
        raise NoPositives(f"No target of class {positive_class!r} in ranking of {ranking.query_id}")
    return float(np.mean(precisions))


def mean_average_precision(rankings: Sequence[RetrievalRanking]) -> float:
    """Unweighted mean of per-query AP, each query's class being positive."""
    if not rankings:
        raise ValueError("No rankings")
    return float(np.mean([average_precision(ranking) for ranking in rankings]))


def retrieval_summary(rankings: Mapping[str, Sequence[RetrievalRanking]]) -> Dict[str, Any]:
    """
    AP per query class and MAP for each ranking method.

    Args:
        rankings: Method name to one ranking per query

    Returns:
        {method: {'per_class': {class: AP}, 'map': MAP}}
    """
    summary = {}
    for method, method_rankings in rankings.items():
        by_class: Dict[str, List[float]] = {}
        for ranking in method_rankings:
            by_class.setdefault(ranking.query_label, []).append(average_precision(ranking))
        ordered = sorted(by_class.items(), key=lambda item: str(item[0]))
        summary[method] = {
            'per_class': {str(label): float(np.mean(aps)) for label, aps in ordered},
            'map': mean_average_precision(method_rankings),
        }
    return summary


# ============================================================================
# Baselines
# ============================================================================

def shapedna_distance(basis_a: SpectralBasis, basis_b: SpectralBasis, k: int) -> float:
    """Euclidean distance of the first k nonzero eigenvalues."""
    if basis_a.k < k + 1 or basis_b.k < k + 1:
        raise ValueError(f"ShapeDNA with k={k} needs {k + 1} eigenvalues per shape")
    return float(np.linalg.norm(basis_a.eigenvalues[1:k + 1] - basis_b.eigenvalues[1:k + 1]))


def segment_cost_baseline(sig2d: np.ndarray, sig3d: np.ndarray) -> float:
    """Region assignment cost used directly as a retrieval score."""
    return assign_regions(sig2d, sig3d).cost


def baseline_rankings(query: QueryFeatures, targets: Sequence[TargetFeatures],
                      labels: Optional[Mapping[str, str]] = None,
                      query_label: Optional[str] = None,
                      k: Optional[int] = None) -> Dict[str, RetrievalRanking]:
    """ShapeDNA and segment-cost rankings of the targets for one query."""
    if k is None:
        k = min([query.basis.k] + [target.basis.k for target in targets]) - 1
    shapedna = {t.name: shapedna_distance(query.basis, t.basis, k) for t in targets}
    segments = {t.name: segment_cost_baseline(query.signatures, t.signatures) for t in targets}
    return {
        'shapedna': rank_by_scores(query.name, shapedna, labels, query_label),
        'segment_cost': rank_by_scores(query.name, segments, labels, query_label),
    }
