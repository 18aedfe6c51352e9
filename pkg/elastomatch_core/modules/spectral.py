"""
Laplace-Beltrami spectra and spectral point descriptors.
Cotangent stiffness with lumped mass on 3D meshes and 2D solids, truncated
generalized eigendecomposition, scaled HKS and WKS fields, and restriction
of solid descriptors to the query curve.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import ConvergenceFailure, DimensionMismatch, NumericalDegeneracy
from .geometry_io import PlanarSolidMesh, TriMesh

logger = logging.getLogger(__name__)

DEFAULT_NUM_EIGENFUNCTIONS = 25
DEFAULT_DESCRIPTOR_WIDTH = 100
DENSE_EIGEN_MAX_N = 300
EIGS_MAXITER = 10000
EIGS_SIGMA = -0.01
WKS_SIGMA_FACTOR = 7.0
HKS_TIME_CONSTANT = 4.0 * math.log(10.0)


class DescriptorKind(str, Enum):
    HKS = 'hks'
    WKS = 'wks'


@dataclass(frozen=True, eq=False)
class LaplacianPair:
    """Cotangent stiffness matrix and lumped vertex masses."""

    stiffness: sparse.csr_matrix
    mass: np.ndarray

    @property
    def n(self) -> int:
        return len(self.mass)


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Ascending eigenvalues, mass-orthonormal eigenfunctions (n x k), masses."""

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    mass: np.ndarray

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    @property
    def n(self) -> int:
        return self.eigenfunctions.shape[0]

    def to_arrays(self) -> Dict[str, np.ndarray]:
        return {
            'eigenvalues': self.eigenvalues,
            'eigenfunctions': self.eigenfunctions,
            'mass': self.mass,
        }

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray]) -> 'SpectralBasis':
        return cls(
            eigenvalues=arrays['eigenvalues'],
            eigenfunctions=arrays['eigenfunctions'],
            mass=arrays['mass'],
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'eigenvalues': self.eigenvalues.tolist(),
            'eigenfunctions': self.eigenfunctions.tolist(),
            'mass': self.mass.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SpectralBasis':
        return cls.from_arrays({key: np.asarray(value, dtype=np.float64)
                                for key, value in data.items()})


@dataclass(frozen=True, eq=False)
class DescriptorField:
    """Per-vertex descriptor matrix (n x d)."""

    values: np.ndarray
    kind: DescriptorKind

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind.value, 'values': self.values.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DescriptorField':
        return cls(values=np.asarray(data['values'], dtype=np.float64),
                   kind=DescriptorKind(data['kind']))


# ============================================================================
# Laplacians
# ============================================================================

def _corner_cotangents(points: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Cotangent of the interior angle at each corner, shape (f, 3)."""
    p0, p1, p2 = points[faces[:, 0]], points[faces[:, 1]], points[faces[:, 2]]
    cots = []
    for apex, left, right in ((p0, p1, p2), (p1, p2, p0), (p2, p0, p1)):
        a = left - apex
        b = right - apex
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        dot = np.einsum('ij,ij->i', a, b)
        with np.errstate(divide='ignore', invalid='ignore'):
            cots.append(dot / cross)
    return np.column_stack(cots)


def _cotangent_laplacian(points: np.ndarray, faces: np.ndarray) -> LaplacianPair:
    n = len(points)
    cots = _corner_cotangents(points, faces)
    if not np.all(np.isfinite(cots)):
        raise NumericalDegeneracy("Non-finite cotangent weight (degenerate triangle)")

    # The weight of edge (a, b) collects half the cotangent of the opposite corner
    rows = np.concatenate([faces[:, 1], faces[:, 2], faces[:, 0]])
    cols = np.concatenate([faces[:, 2], faces[:, 0], faces[:, 1]])
    weights = 0.5 * np.concatenate([cots[:, 0], cots[:, 1], cots[:, 2]])
    upper = sparse.coo_matrix((weights, (rows, cols)), shape=(n, n))
    adjacency = (upper + upper.T).tocsr()
    degree = np.asarray(adjacency.sum(axis=1)).ravel()
    stiffness = (sparse.diags(degree) - adjacency).tocsr()
    stiffness.sort_indices()

    p0, p1, p2 = points[faces[:, 0]], points[faces[:, 1]], points[faces[:, 2]]
    areas = 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)
    mass = np.bincount(faces.ravel(), weights=np.repeat(areas / 3.0, 3), minlength=n)
    if np.any(mass <= 0):
        raise NumericalDegeneracy("Vertex with zero lumped mass")

    return LaplacianPair(stiffness=stiffness, mass=mass)


def build_laplacian_3d(mesh: TriMesh) -> LaplacianPair:
    """Cotangent stiffness and barycentric lumped mass of a surface mesh."""
    return _cotangent_laplacian(np.asarray(mesh.vertices), np.asarray(mesh.faces))


def build_laplacian_2d(solid: PlanarSolidMesh) -> LaplacianPair:
    """
    Cotangent Laplacian of the flat solid.
    Natural boundary conditions come from the unmodified cotangent formula.
    """
    flat = np.column_stack([solid.vertices, np.zeros(solid.n)])
    return _cotangent_laplacian(flat, np.asarray(solid.faces))


# ============================================================================
# Eigendecomposition
# ============================================================================

def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the first non-negligible entry of each column positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        column = out[:, j]
        threshold = 1e-10 * np.abs(column).max()
        first = int(np.argmax(np.abs(column) > threshold))
        if column[first] < 0:
            out[:, j] = -column
    return out


def eigendecompose(lap: LaplacianPair, k: int = DEFAULT_NUM_EIGENFUNCTIONS,
                   dense_max_n: int = DENSE_EIGEN_MAX_N,
                   maxiter: int = EIGS_MAXITER) -> SpectralBasis:
    """
    Smallest k generalized eigenpairs of (stiffness, mass).

    Args:
        lap: Laplacian pair
        k: Number of eigenpairs (k < n; k == n allowed on the dense path)
        dense_max_n: Use the dense solver up to this many vertices
        maxiter: Iteration cap of the shift-invert Lanczos solver

    Returns:
        SpectralBasis, ascending and mass-orthonormal

    Raises:
        ConvergenceFailure: If the iterative solver hits its iteration cap
    """
    n = lap.n
    dense = n <= dense_max_n
    if k < 1 or k > n or (k == n and not dense):
        raise ValueError(f"Cannot compute {k} eigenpairs of a {n}-vertex operator")

    if dense:
        values, vectors = scipy.linalg.eigh(
            lap.stiffness.toarray(), np.diag(lap.mass), subset_by_index=[0, k - 1]
        )
    else:
        mass_matrix = sparse.diags(lap.mass).tocsc()
        try:
            values, vectors = eigsh(
                lap.stiffness.tocsc(), k=k, M=mass_matrix,
                sigma=EIGS_SIGMA, which='LM', maxiter=maxiter
            )
        except ArpackNoConvergence as e:
            raise ConvergenceFailure(
                f"Eigensolver did not converge after {maxiter} iterations"
            ) from e

    order = np.argsort(values, kind='stable')
    values = np.maximum(values[order], 0.0)
    vectors = vectors[:, order]
    norms = np.sqrt(np.einsum('i,ij,ij->j', lap.mass, vectors, vectors))
    vectors = _fix_signs(vectors / norms)

    logger.debug("Eigendecomposition (%s): n=%d, k=%d, lambda_1=%.6g",
                 'dense' if dense else 'shift-invert', n, k,
                 values[1] if k > 1 else values[0])
    return SpectralBasis(eigenvalues=values, eigenfunctions=vectors, mass=lap.mass.copy())


# ============================================================================
# Descriptors
# ============================================================================

def heat_kernel_diagonal(basis: SpectralBasis, times: np.ndarray) -> np.ndarray:
    """Unscaled heat kernel diagonal sum_j exp(-lambda_j t) psi_j(x)^2, shape (n, T)."""
    decay = np.exp(-np.outer(basis.eigenvalues, np.asarray(times, dtype=np.float64)))
    return np.square(basis.eigenfunctions) @ decay


def hks_times(basis: SpectralBasis, d: int) -> np.ndarray:
    """d log-spaced times in [4 ln10 / lambda_{k-1}, 4 ln10 / lambda_1]."""
    lambda_1 = basis.eigenvalues[1]
    lambda_max = basis.eigenvalues[-1]
    if lambda_1 <= 0:
        raise NumericalDegeneracy("lambda_1 is zero; operator kernel is not one-dimensional")
    return np.geomspace(HKS_TIME_CONSTANT / lambda_max, HKS_TIME_CONSTANT / lambda_1, d)


def compute_hks(basis: SpectralBasis, d: int = DEFAULT_DESCRIPTOR_WIDTH) -> DescriptorField:
    """
    Scaled heat kernel signature, max-normalized to 1.
    Each time slice is divided by its surface integral (the heat trace).
    """
    if d < 1:
        raise ValueError(f"Descriptor width must be positive, got {d}")
    if basis.k < 2:
        raise ValueError("HKS needs at least 2 eigenpairs")

    values = heat_kernel_diagonal(basis, hks_times(basis, d))
    values = values / (basis.mass @ values)
    values = values / values.max()
    return DescriptorField(values=values, kind=DescriptorKind.HKS)


def compute_wks(basis: SpectralBasis, d: int = DEFAULT_DESCRIPTOR_WIDTH,
                sigma_factor: float = WKS_SIGMA_FACTOR) -> DescriptorField:
    """
    Wave kernel signature over d log-energies, max-normalized to 1.
    The zero eigenvalue is excluded; log(lambda_0) is undefined.
    """
    if d < 1:
        raise ValueError(f"Descriptor width must be positive, got {d}")
    if basis.k < 3:
        raise ValueError("WKS needs at least 3 eigenpairs")

    eigenvalues = basis.eigenvalues[1:]
    if eigenvalues[0] <= 0:
        raise NumericalDegeneracy("lambda_1 is zero; operator kernel is not one-dimensional")
    log_lambda = np.log(eigenvalues)
    e_min, e_max = log_lambda[0], log_lambda[-1]
    span = e_max - e_min
    if span <= 1e-12:
        span = 1.0
    energies = np.linspace(e_min, e_max, d)
    sigma = sigma_factor * span / d

    weights = np.exp(-np.square(energies[:, None] - log_lambda[None, :]) / (2.0 * sigma ** 2))
    weights = weights / weights.sum(axis=1, keepdims=True)
    values = np.square(basis.eigenfunctions[:, 1:]) @ weights.T
    values = values / values.max()
    return DescriptorField(values=values, kind=DescriptorKind.WKS)


def restrict_to_boundary(field: DescriptorField, solid: PlanarSolidMesh) -> DescriptorField:
    """Rows of a solid descriptor field at the curve vertices, in curve order."""
    if field.n != solid.n:
        raise DimensionMismatch(
            f"Field has {field.n} rows but solid has {solid.n} vertices"
        )
    return DescriptorField(values=field.values[solid.boundary_map], kind=field.kind)
