"""Gauss-Hermite quadrature for expectations under multivariate normals.

The one-dimensional rule is the probabilists' variant: nodes and weights
integrate polynomials of degree <= 2N-1 exactly against the standard
normal density.  Multivariate grids are full tensor products with product
weights; correlated distributions are reached by pushing the standard
grid through a square root of the target covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import DomainError, ResourceLimitError

MAX_GRID_POINTS = 10**6


def gauss_hermite_1d(n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Probabilists' Gauss-Hermite rule with ``n_points`` nodes.

    Computed by the Golub-Welsch eigendecomposition of the symmetric
    tridiagonal Jacobi matrix of the Hermite recurrence (diagonal 0,
    off-diagonal sqrt(k)).  Nodes come back sorted ascending; weights are
    positive and sum to 1.
    """
    if n_points < 1:
        raise DomainError(f"need at least one quadrature point, got {n_points}")
    if n_points == 1:
        return np.zeros(1), np.ones(1)
    offdiag = np.sqrt(np.arange(1, n_points, dtype=float))
    nodes, vectors = eigh_tridiagonal(np.zeros(n_points), offdiag)
    weights = vectors[0, :] ** 2
    # the rule is symmetric about 0; enforce that exactly (odd rules get an
    # exact center node, means vanish identically)
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return nodes, weights


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor-product grid for a standard p-variate normal.

    ``nodes`` has shape (dimension, points_per_dim**dimension); column n is
    the n-th grid point.  ``weights`` are the matching products of the 1-D
    weights.  Ordering is an odometer over dimensions with the last
    dimension varying fastest.
    """

    points_per_dim: int
    dimension: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n_points(self) -> int:
        return self.weights.size


def build_grid(n_points: int, dimension: int) -> QuadratureGrid:
    """Full tensor product of the 1-D rule in ``dimension`` dimensions."""
    if dimension < 1:
        raise DomainError(f"dimension must be >= 1, got {dimension}")
    if n_points < 1:
        raise DomainError(f"need at least one quadrature point, got {n_points}")
    total = n_points**dimension
    if total > MAX_GRID_POINTS:
        raise ResourceLimitError(
            f"grid of {n_points}^{dimension} = {total} points exceeds the "
            f"{MAX_GRID_POINTS} budget; reduce the number of points per dimension")
    nodes_1d, weights_1d = gauss_hermite_1d(n_points)
    axes = np.meshgrid(*([nodes_1d] * dimension), indexing="ij")
    nodes = np.stack([ax.reshape(-1) for ax in axes], axis=0)
    wgrids = np.meshgrid(*([weights_1d] * dimension), indexing="ij")
    weights = np.ones(total)
    for w in wgrids:
        weights = weights * w.reshape(-1)
    return QuadratureGrid(points_per_dim=n_points, dimension=dimension,
                          nodes=nodes, weights=weights)


def covariance_root(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric PSD matrix.

    Falls back to an eigendecomposition square root when the matrix is
    singular (zero variance directions are kept as zero columns).  Rejects
    asymmetric input and eigenvalues below a small negative tolerance
    relative to the matrix scale.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DomainError(f"covariance must be square, got shape {cov.shape}")
    scale = float(np.abs(cov).max()) if cov.size else 0.0
    if not np.allclose(cov, cov.T, atol=1e-8 * max(1.0, scale), rtol=0.0):
        raise DomainError("covariance matrix is not symmetric")
    cov = 0.5 * (cov + cov.T)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    eigvals, eigvecs = np.linalg.eigh(cov)
    tol = -1e-10 * max(1.0, float(eigvals[-1]) if eigvals.size else 0.0)
    if eigvals.min() < tol:
        raise DomainError(
            f"covariance has a negative eigenvalue ({eigvals.min():.3e}); "
            "not positive semidefinite")
    root = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    return root


def transform_nodes(grid: QuadratureGrid, cov: np.ndarray) -> np.ndarray:
    """Map standard-normal grid nodes onto a target covariance.

    Returns an array of shape (n_points, dimension) whose row n equals
    (Omega @ node_n) with Omega a square root of ``cov``; the weighted
    second moment of the rows reproduces ``cov`` for 2 or more points per
    dimension.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (grid.dimension, grid.dimension):
        raise DomainError(
            f"covariance shape {cov.shape} does not match grid dimension "
            f"{grid.dimension}")
    omega = covariance_root(cov)
    return (omega @ grid.nodes).T
