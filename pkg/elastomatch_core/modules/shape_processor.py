"""
Shape processing module: turns target meshes and query curves into the
features consumed by the matcher, and matches query/target pairs.
Supports: .off, .obj meshes and .csv, .txt, .json curves
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .cost import DEFAULT_TAU, CostMatrix, FeatureField, build_cost_matrix
from .errors import ParseError
from .feature_cache import FeatureCache
from .geodesics import GeodesicProvider, create_geodesic_provider, normalize_mesh, normalize_query
from .geometry_io import (
    DEFAULT_MIN_ANGLE,
    EXACT_DIAMETER_MAX_N,
    Curve2D,
    PlanarSolidMesh,
    TriMesh,
    is_mesh_file,
    load_curve,
    load_mesh,
    tessellate_solid,
    validate_shape_file,
)
from .matcher import MatchResult, branch_and_bound_match, exhaustive_match
from .segmentation import (
    DEFAULT_NUM_REGIONS,
    RegionAssignment,
    SegmentLabels,
    assign_regions,
    region_signatures,
    segment_shape,
)
from .spectral import (
    DEFAULT_DESCRIPTOR_WIDTH,
    DEFAULT_NUM_EIGENFUNCTIONS,
    DENSE_EIGEN_MAX_N,
    EIGS_MAXITER,
    DescriptorField,
    DescriptorKind,
    SpectralBasis,
    build_laplacian_2d,
    build_laplacian_3d,
    compute_hks,
    compute_wks,
    eigendecompose,
    restrict_to_boundary,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_AREA_FACTOR = 1e-3


@dataclass(frozen=True, eq=False)
class TargetFeatures:
    """A target mesh scaled to unit geodesic diameter, with its features."""

    name: str
    mesh: TriMesh
    diameter: float
    basis: SpectralBasis
    hks: DescriptorField
    wks: DescriptorField
    labels: SegmentLabels
    signatures: np.ndarray

    @cached_property
    def geodesics(self) -> GeodesicProvider:
        return create_geodesic_provider(self.mesh)

    def feature_field(self, use_segments: bool = True) -> FeatureField:
        return FeatureField.from_descriptors(self.hks, self.wks,
                                             self.labels if use_segments else None)

    def to_arrays(self) -> Dict[str, np.ndarray]:
        arrays = {f'basis.{key}': value for key, value in self.basis.to_arrays().items()}
        arrays.update({
            'diameter': np.array([self.diameter]),
            'hks': self.hks.values,
            'wks': self.wks.values,
            'labels': self.labels.labels.astype(np.float64),
            'signatures': self.signatures,
        })
        return arrays

    @classmethod
    def from_arrays(cls, name: str, mesh: TriMesh, arrays: Dict[str, np.ndarray],
                    r: int) -> 'TargetFeatures':
        """Rebuild from cached arrays and the unnormalized mesh."""
        diameter = float(arrays['diameter'][0])
        basis = SpectralBasis.from_arrays(
            {key.split('.', 1)[1]: value for key, value in arrays.items()
             if key.startswith('basis.')}
        )
        return cls(
            name=name,
            mesh=mesh.scaled(1.0 / diameter),
            diameter=diameter,
            basis=basis,
            hks=DescriptorField(values=arrays['hks'], kind=DescriptorKind.HKS),
            wks=DescriptorField(values=arrays['wks'], kind=DescriptorKind.WKS),
            labels=SegmentLabels(labels=arrays['labels'].astype(np.int64), r=r),
            signatures=arrays['signatures'],
        )


@dataclass(frozen=True, eq=False)
class QueryFeatures:
    """
    A query curve and its solid, scaled to unit solid diameter.

    Descriptors and region labels live on the solid; hks, wks and
    curve_labels are their restriction to the curve vertices.
    """

    name: str
    curve: Curve2D
    solid: PlanarSolidMesh
    diameter: float
    basis: SpectralBasis
    hks: DescriptorField
    wks: DescriptorField
    solid_labels: SegmentLabels
    signatures: np.ndarray

    @property
    def curve_labels(self) -> np.ndarray:
        return self.solid_labels.labels[self.solid.boundary_map]

    def feature_field(self, assignment: Optional[RegionAssignment] = None) -> FeatureField:
        """Curve features; labels are relabeled through `assignment` when given."""
        labels = None
        if assignment is not None:
            labels = np.asarray(assignment.perm, dtype=np.int64)[self.curve_labels]
        return FeatureField(hks=self.hks.values, wks=self.wks.values, labels=labels)

    def to_arrays(self) -> Dict[str, np.ndarray]:
        arrays = {f'basis.{key}': value for key, value in self.basis.to_arrays().items()}
        arrays.update({
            'diameter': np.array([self.diameter]),
            'solid.vertices': self.solid.vertices,
            'solid.faces': self.solid.faces.astype(np.float64),
            'solid.boundary_map': self.solid.boundary_map.astype(np.float64),
            'hks': self.hks.values,
            'wks': self.wks.values,
            'labels': self.solid_labels.labels.astype(np.float64),
            'signatures': self.signatures,
        })
        return arrays

    @classmethod
    def from_arrays(cls, name: str, curve: Curve2D, arrays: Dict[str, np.ndarray],
                    r: int) -> 'QueryFeatures':
        """Rebuild from cached arrays and the unnormalized curve."""
        diameter = float(arrays['diameter'][0])
        basis = SpectralBasis.from_arrays(
            {key.split('.', 1)[1]: value for key, value in arrays.items()
             if key.startswith('basis.')}
        )
        solid = PlanarSolidMesh(
            vertices=arrays['solid.vertices'],
            faces=arrays['solid.faces'].astype(np.int64),
            boundary_map=arrays['solid.boundary_map'].astype(np.int64),
        )
        return cls(
            name=name,
            curve=curve.scaled(1.0 / diameter),
            solid=solid,
            diameter=diameter,
            basis=basis,
            hks=DescriptorField(values=arrays['hks'], kind=DescriptorKind.HKS),
            wks=DescriptorField(values=arrays['wks'], kind=DescriptorKind.WKS),
            solid_labels=SegmentLabels(labels=arrays['labels'].astype(np.int64), r=r),
            signatures=arrays['signatures'],
        )


@dataclass(frozen=True, eq=False)
class PairMatch:
    result: MatchResult
    cost: CostMatrix
    assignment: Optional[RegionAssignment]


Features = Union[TargetFeatures, QueryFeatures]


class ShapeProcessor:
    """Computes spectral features of shapes and matches queries to targets."""

    def __init__(self, k: int = DEFAULT_NUM_EIGENFUNCTIONS, d: int = DEFAULT_DESCRIPTOR_WIDTH,
                 r: int = DEFAULT_NUM_REGIONS, tau: float = DEFAULT_TAU,
                 max_area_factor: float = DEFAULT_MAX_AREA_FACTOR,
                 min_angle: float = DEFAULT_MIN_ANGLE, seed: int = 0,
                 dense_max_n: int = DENSE_EIGEN_MAX_N, eigs_maxiter: int = EIGS_MAXITER,
                 exact_diameter_max_n: int = EXACT_DIAMETER_MAX_N,
                 cache: Optional[FeatureCache] = None, fingerprint: str = ''):
        """
        Initialize shape processor.

        Args:
            k: Number of Laplace-Beltrami eigenpairs
            d: Descriptor width of HKS and WKS
            r: Number of segmentation regions
            tau: Cost of matching points in different regions
            max_area_factor: Maximum solid triangle area as a fraction of the curve area
            min_angle: Minimum triangle angle of the solid, degrees
            seed: Segmentation seed
            dense_max_n: Dense eigensolver threshold
            eigs_maxiter: Iteration cap of the sparse eigensolver
            exact_diameter_max_n: Exact geodesic diameter threshold
            cache: Optional feature cache used by process_file
            fingerprint: Configuration fingerprint mixed into cache keys
        """
        self.k = k
        self.d = d
        self.r = r
        self.tau = tau
        self.max_area_factor = max_area_factor
        self.min_angle = min_angle
        self.seed = seed
        self.dense_max_n = dense_max_n
        self.eigs_maxiter = eigs_maxiter
        self.exact_diameter_max_n = exact_diameter_max_n
        self.cache = cache
        self.fingerprint = fingerprint

    def _exact_diameter(self, n: int) -> bool:
        return n <= self.exact_diameter_max_n

    def _basis(self, lap) -> SpectralBasis:
        return eigendecompose(lap, k=self.k, dense_max_n=self.dense_max_n,
                              maxiter=self.eigs_maxiter)

    def process_mesh(self, mesh: TriMesh, name: str = '') -> TargetFeatures:
        """
        Normalize a target mesh and compute its features.

        Args:
            mesh: Target mesh
            name: Identifier used in rankings and logs

        Returns:
            TargetFeatures
        """
        scaled, diameter = normalize_mesh(mesh, exact=self._exact_diameter(mesh.n))
        basis = self._basis(build_laplacian_3d(scaled))
        hks = compute_hks(basis, self.d)
        wks = compute_wks(basis, self.d)
        labels = segment_shape(basis, scaled.edge_graph, self.r, seed=self.seed)
        signatures = region_signatures(labels, hks, wks, basis.mass)
        logger.info("Processed mesh %s: n=%d, diameter %.4g", name or '<mesh>', mesh.n, diameter)
        return TargetFeatures(name=name, mesh=scaled, diameter=diameter, basis=basis,
                              hks=hks, wks=wks, labels=labels, signatures=signatures)

    def process_curve(self, curve: Curve2D, name: str = '') -> QueryFeatures:
        """
        Tessellate a query curve, normalize it and compute its features.

        Args:
            curve: Query curve
            name: Identifier used in logs

        Returns:
            QueryFeatures
        """
        solid = tessellate_solid(curve, max_area=self.max_area_factor * curve.area,
                                 min_angle=self.min_angle)
        scaled_curve, scaled_solid, diameter = normalize_query(
            curve, solid, exact=self._exact_diameter(solid.n)
        )
        basis = self._basis(build_laplacian_2d(scaled_solid))
        solid_hks = compute_hks(basis, self.d)
        solid_wks = compute_wks(basis, self.d)
        labels = segment_shape(basis, scaled_solid.edge_graph, self.r, seed=self.seed)
        signatures = region_signatures(labels, solid_hks, solid_wks, basis.mass)
        logger.info("Processed curve %s: m=%d, solid n=%d", name or '<curve>', curve.m, solid.n)
        return QueryFeatures(
            name=name, curve=scaled_curve, solid=scaled_solid, diameter=diameter, basis=basis,
            hks=restrict_to_boundary(solid_hks, scaled_solid),
            wks=restrict_to_boundary(solid_wks, scaled_solid),
            solid_labels=labels, signatures=signatures,
        )

    def process_file(self, file_path: str) -> Features:
        """
        Load a shape file and compute its features, using the cache if set.

        Args:
            file_path: Path to a mesh or curve file

        Returns:
            TargetFeatures for meshes, QueryFeatures for curves

        Raises:
            FileNotFoundError: If file doesn't exist
            ParseError: If file format is not supported or malformed
        """
        path = Path(file_path)
        if not path.exists():
            raise FileNotFoundError(f"File not found: {file_path}")
        is_valid, message = validate_shape_file(str(path))
        if not is_valid:
            raise ParseError(message)

        mesh_input = is_mesh_file(str(path))
        shape = load_mesh(str(path)) if mesh_input else load_curve(str(path))
        rebuild = TargetFeatures.from_arrays if mesh_input else QueryFeatures.from_arrays

        key = None
        if self.cache is not None:
            key = FeatureCache.make_key(str(path), self.fingerprint)
            hit = self.cache.get(key)
            if hit is not None:
                _, arrays = hit
                try:
                    return rebuild(path.stem, shape, arrays, self.r)
                except KeyError as e:
                    logger.warning("Cache entry %s lacks array %s; recomputing", key[:12], e)
                    self.cache.delete(key)

        if mesh_input:
            features = self.process_mesh(shape, name=path.stem)
        else:
            features = self.process_curve(shape, name=path.stem)

        if self.cache is not None:
            metadata = {
                'source': path.name,
                'kind': 'mesh' if mesh_input else 'curve',
                'fingerprint': self.fingerprint,
            }
            self.cache.put(key, metadata, features.to_arrays())
        return features

    def build_cost(self, query: QueryFeatures, target: TargetFeatures,
                   use_segments: bool = True) -> Tuple[CostMatrix, Optional[RegionAssignment]]:
        """
        Cost matrix between a query curve and a target mesh.

        With segments, query regions are first assigned to target regions and
        the curve labels relabeled so matched regions share labels.
        """
        assignment = None
        if use_segments:
            assignment = assign_regions(query.signatures, target.signatures)
        cost = build_cost_matrix(query.feature_field(assignment),
                                 target.feature_field(use_segments), self.tau)
        return cost, assignment

    def match_pair(self, query: QueryFeatures, target: TargetFeatures, solver: str = 'bnb',
                   use_segments: bool = True, threads: int = 1) -> PairMatch:
        """
        Globally optimal matching of a query curve to a target mesh.

        Args:
            query: Query features
            target: Target features
            solver: 'bnb' or 'exhaustive'
            use_segments: Gate costs by region assignment
            threads: Worker threads for the solver

        Returns:
            PairMatch with the result, cost matrix and region assignment
        """
        cost, assignment = self.build_cost(query, target, use_segments)
        if solver == 'bnb':
            result = branch_and_bound_match(cost, query.curve, target.mesh,
                                            geodesics=target.geodesics, threads=threads)
        elif solver == 'exhaustive':
            result = exhaustive_match(cost, query.curve, target.mesh, threads=threads)
        else:
            raise ValueError(f"Unknown solver: {solver}")
        logger.info("Matched %s to %s: energy %.6g", query.name or '<query>',
                    target.name or '<target>', result.energy)
        return PairMatch(result=result, cost=cost, assignment=assignment)

    def get_settings(self) -> Dict[str, Any]:
        return {
            'k': self.k, 'd': self.d, 'r': self.r, 'tau': self.tau,
            'max_area_factor': self.max_area_factor, 'min_angle': self.min_angle,
            'seed': self.seed,
        }
