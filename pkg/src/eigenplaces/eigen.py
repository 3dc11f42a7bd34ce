"""Common presence structures via eigendecomposition.

The corpus feature matrix is mean-centered, its 48x48 sample covariance is
decomposed, and the resulting orthonormal components ("eigenlocations")
give a ranked basis of typical hourly presence patterns. Projecting a
location's vector onto the top components and reconstructing denoises it
while keeping it interpretable as an hourly curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, InsufficientDataError
from .features import FeatureMatrix

DEFAULT_COMPONENTS = 8

_SYMMETRY_TOL = 1e-9
_EIGENVALUE_CLAMP = -1e-9


@dataclass(slots=True)
class Eigenbasis:
    """Mean pattern plus descending orthonormal components.

    ``eigenvectors[:, j]`` is the j-th component; ``explained_ratio`` sums
    to 1 over all components.
    """

    mean: np.ndarray          # float64[d]
    eigenvalues: np.ndarray   # float64[d], descending, >= 0
    eigenvectors: np.ndarray  # float64[d, d], columns orthonormal
    explained_ratio: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def cumulative_ratio(self, k: int) -> float:
        return float(self.explained_ratio[:k].sum())


@dataclass(slots=True)
class TruncatedBasis:
    mean: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # float64[d, k]
    cumulative_explained: float

    @property
    def k(self) -> int:
        return self.eigenvectors.shape[1]


def mean_center(matrix: FeatureMatrix | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column means and row deviations. Needs at least two rows."""
    values = matrix.values if isinstance(matrix, FeatureMatrix) else np.asarray(matrix)
    if values.shape[0] < 2:
        raise InsufficientDataError(
            f"need >= 2 rows to extract structure, got {values.shape[0]}"
        )
    mean = values.mean(axis=0)
    return mean, values - mean


def covariance(deviations: np.ndarray) -> np.ndarray:
    """Sample covariance over rows: C = A^T A / U."""
    dev = np.asarray(deviations, dtype=np.float64)
    return dev.T @ dev / dev.shape[0]


def eigendecompose(cov: np.ndarray) -> Eigenbasis:
    """Symmetric eigendecomposition with a fixed output convention:
    eigenvalues descending and clamped at 0, each component's
    largest-magnitude entry positive."""
    cov = np.asarray(cov, dtype=np.float64)
    asym = np.abs(cov - cov.T).max() if cov.size else 0.0
    if asym > _SYMMETRY_TOL:
        raise ContractViolationError(f"matrix not symmetric (max dev {asym:g})")
    values, vectors = np.linalg.eigh((cov + cov.T) / 2.0)
    order = np.argsort(values)[::-1]
    values = values[order]
    vectors = vectors[:, order]
    if values.min() < _EIGENVALUE_CLAMP * max(1.0, abs(values.max())):
        raise ContractViolationError(
            f"covariance not PSD (min eigenvalue {values.min():g})"
        )
    values = np.maximum(values, 0.0)
    for j in range(vectors.shape[1]):
        pivot = np.argmax(np.abs(vectors[:, j]))
        if vectors[pivot, j] < 0:
            vectors[:, j] = -vectors[:, j]
    total = values.sum()
    ratio = values / total if total > 0 else np.zeros_like(values)
    return Eigenbasis(np.zeros(cov.shape[0]), values, vectors, ratio)


def fit_eigenbasis(matrix: FeatureMatrix | np.ndarray) -> Eigenbasis:
    """mean-center -> covariance -> decomposition, with the mean attached."""
    mean, deviations = mean_center(matrix)
    basis = eigendecompose(covariance(deviations))
    basis.mean = mean
    return basis


def select_components(basis: Eigenbasis, k: int) -> TruncatedBasis:
    if not 1 <= k <= basis.dim:
        raise ValueError(f"k must be in [1, {basis.dim}], got {k}")
    return TruncatedBasis(
        mean=basis.mean,
        eigenvalues=basis.eigenvalues[:k].copy(),
        eigenvectors=basis.eigenvectors[:, :k].copy(),
        cumulative_explained=basis.cumulative_ratio(k),
    )


def project(vector: np.ndarray, basis: Eigenbasis | TruncatedBasis, k: int | None = None) -> np.ndarray:
    """Loadings of (vector - mean) on the top-k components."""
    vecs = basis.eigenvectors if k is None else basis.eigenvectors[:, :k]
    return (np.asarray(vector, dtype=np.float64) - basis.mean) @ vecs


def reconstruct(coefficients: np.ndarray, basis: Eigenbasis | TruncatedBasis) -> np.ndarray:
    """mean + sum of coefficient-weighted components."""
    coefficients = np.asarray(coefficients, dtype=np.float64)
    k = coefficients.shape[-1]
    return basis.mean + coefficients @ basis.eigenvectors[:, :k].T


def project_matrix(values: np.ndarray, basis: Eigenbasis | TruncatedBasis, k: int | None = None) -> np.ndarray:
    vecs = basis.eigenvectors if k is None else basis.eigenvectors[:, :k]
    return (np.asarray(values, dtype=np.float64) - basis.mean) @ vecs


def reconstruct_matrix(coefficients: np.ndarray, basis: Eigenbasis | TruncatedBasis) -> np.ndarray:
    return reconstruct(coefficients, basis)


def denoise(values: np.ndarray, basis: Eigenbasis, k: int) -> np.ndarray:
    """k-truncated reconstruction of every row."""
    return reconstruct(project_matrix(values, basis, k), basis)
