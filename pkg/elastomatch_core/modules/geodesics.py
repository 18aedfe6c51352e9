"""
Geodesic distance providers for branch-and-bound splitting and error evaluation.
Providers cache per-source distance fields on a fixed mesh.
"""
from abc import ABC, abstractmethod
import logging
import threading
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.sparse import csgraph

from .geometry_io import (
    EXACT_DIAMETER_MAX_N,
    Curve2D,
    PlanarSolidMesh,
    Shape,
    TriMesh,
    geodesic_diameter,
    geodesic_distances,
)

logger = logging.getLogger(__name__)


class GeodesicProvider(ABC):
    """Abstract base class for geodesic distance providers."""

    @abstractmethod
    def distances(self, source: int) -> np.ndarray:
        """
        Distances from one vertex to all vertices.

        Args:
            source: Source vertex index

        Returns:
            Read-only array of n nonnegative distances
        """
        pass

    @abstractmethod
    def diameter(self) -> float:
        """Return the geodesic diameter of the mesh."""
        pass

    @property
    @abstractmethod
    def name(self) -> str:
        """Return provider name for logging."""
        pass


class DijkstraGeodesicProvider(GeodesicProvider):
    """
    On-demand single-source Dijkstra with a per-source cache.
    Suited to large meshes where only a few sources are ever queried.
    """

    def __init__(self, mesh: Shape, exact_diameter: Optional[bool] = None):
        """
        Initialize provider.

        Args:
            mesh: Shape with an edge graph
            exact_diameter: Passed to geodesic_diameter (None = size-based choice)
        """
        self.mesh = mesh
        self.exact_diameter = exact_diameter
        self._cache: Dict[int, np.ndarray] = {}
        self._diameter = None
        self._lock = threading.Lock()

    def distances(self, source: int) -> np.ndarray:
        source = int(source)
        with self._lock:
            cached = self._cache.get(source)
        if cached is not None:
            return cached
        dist = geodesic_distances(self.mesh, source).dist
        with self._lock:
            self._cache[source] = dist
        return dist

    def diameter(self) -> float:
        if self._diameter is None:
            self._diameter = geodesic_diameter(self.mesh, exact=self.exact_diameter)
            logger.debug("Geodesic diameter: %.6g", self._diameter)
        return self._diameter

    @property
    def name(self) -> str:
        return "dijkstra"


class AllPairsGeodesicProvider(GeodesicProvider):
    """
    Precomputed all-pairs distance matrix (n^2 memory).
    Used for small meshes, where it also gives the exact diameter for free.
    """

    def __init__(self, mesh: Shape):
        self.mesh = mesh
        self._matrix = csgraph.dijkstra(mesh.edge_graph, directed=False)
        self._matrix.setflags(write=False)

    def distances(self, source: int) -> np.ndarray:
        return self._matrix[int(source)]

    def diameter(self) -> float:
        return float(self._matrix.max())

    @property
    def name(self) -> str:
        return "all-pairs"


def create_geodesic_provider(mesh: Shape, precompute: Optional[bool] = None,
                             max_precompute_n: int = EXACT_DIAMETER_MAX_N) -> GeodesicProvider:
    """
    Factory function to create a geodesic provider.

    Args:
        mesh: Shape with an edge graph
        precompute: Force all-pairs (True) or on-demand (False); None decides by size
        max_precompute_n: Size threshold for the automatic choice

    Returns:
        Configured GeodesicProvider instance
    """
    if precompute is None:
        precompute = mesh.n <= max_precompute_n
    provider = AllPairsGeodesicProvider(mesh) if precompute else DijkstraGeodesicProvider(mesh)
    logger.debug("Using %s geodesics for n=%d", provider.name, mesh.n)
    return provider


def normalize_mesh(mesh: TriMesh, exact: Optional[bool] = None) -> Tuple[TriMesh, float]:
    """
    Rescale a mesh to unit geodesic diameter.

    Returns:
        Tuple of (scaled mesh, original diameter)
    """
    diameter = geodesic_diameter(mesh, exact=exact)
    if diameter <= 0:
        raise ValueError("Mesh has zero geodesic diameter")
    return mesh.scaled(1.0 / diameter), diameter


def normalize_query(curve: Curve2D, solid: PlanarSolidMesh,
                    exact: Optional[bool] = None) -> Tuple[Curve2D, PlanarSolidMesh, float]:
    """
    Rescale a curve and its solid by the solid's geodesic diameter.

    Returns:
        Tuple of (scaled curve, scaled solid, original diameter)
    """
    diameter = geodesic_diameter(solid, exact=exact)
    if diameter <= 0:
        raise ValueError("Solid has zero geodesic diameter")
    factor = 1.0 / diameter
    return curve.scaled(factor), solid.scaled(factor), diameter
