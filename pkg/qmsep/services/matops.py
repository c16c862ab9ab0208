# qmsep/services/matops.py - Dense complex-matrix primitives
"""
Dense linear-algebra building blocks shared by every other service:
Hilbert-Schmidt geometry, the basis conjugation theta and the reversing map
Theta, the tensor flip, column-stacking vectorization, Hermitian spectral
calculus restricted to supports, and SVD-based spans.

Conventions:
- vectorize stacks columns, so vec(A X B) = (B^T kron A) vec(X).
- tensor is numpy's Kronecker product; e_j kron e_k has index j*n + k.
- logarithms are natural (nats).
"""
import logging
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg

from qmsep.config import rel_tol_or_default, subspace_tol_or_default

logger = logging.getLogger(__name__)


class HermitianEig(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T


class SpanBasis:
    """
    Orthonormal basis (columns of ``basis``) of a linear span.
    Matrices are identified with their column-stacked vectors, so the
    Hilbert-Schmidt inner product becomes the Euclidean one.
    """

    def __init__(self, ambient_dim: int, basis: np.ndarray, tol_used: float,
                 element_shape: Optional[tuple] = None):
        self.ambient_dim = ambient_dim
        self.basis = basis
        self.tol_used = tol_used
        self.element_shape = element_shape

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T

    def elements(self) -> List[np.ndarray]:
        if self.element_shape is None or len(self.element_shape) == 1:
            return [self.basis[:, k] for k in range(self.dim)]
        n = self.element_shape[0]
        return [devectorize(self.basis[:, k], n) for k in range(self.dim)]

    def containment_residual(self, other: "SpanBasis") -> float:
        """Operator norm of the part of ``other`` lying outside this span."""
        if other.dim == 0:
            return 0.0
        outside = other.basis - self.basis @ (self.basis.conj().T @ other.basis)
        return float(np.linalg.norm(outside, 2))

    def same_subspace_residual(self, other: "SpanBasis") -> float:
        return max(self.containment_residual(other), other.containment_residual(self))

    def same_subspace(self, other: "SpanBasis", tol: Optional[float] = None) -> bool:
        # eigenvector error of separate decompositions scales like eps / spectral gap
        return self.dim == other.dim and self.same_subspace_residual(other) <= subspace_tol_or_default(tol)

    def __repr__(self) -> str:
        return f"SpanBasis(dim={self.dim}, ambient_dim={self.ambient_dim})"


def as_matrix(x) -> np.ndarray:
    A = np.asarray(x, dtype=complex)
    if not np.all(np.isfinite(A)):
        raise ValueError("Matrix entries must be finite (no NaN/Inf)")
    return A


def as_square(x) -> np.ndarray:
    A = as_matrix(x)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"Expected a square matrix, got shape {A.shape}")
    return A


def opnorm(A) -> float:
    """Operator (spectral) norm."""
    A = np.asarray(A)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


def matrix_unit(n: int, j: int, k: int) -> np.ndarray:
    E = np.zeros((n, n), dtype=complex)
    E[j, k] = 1.0
    return E


def hs_inner(a, b) -> complex:
    """tr(a* b)."""
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise ValueError(f"Shape mismatch in hs_inner: {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def theta_conj(x) -> np.ndarray:
    """Entrywise complex conjugation in the computational basis."""
    return np.conj(as_matrix(x))


def theta_map(A) -> np.ndarray:
    """Theta(A) = theta A* theta, which is the transpose in the computational basis."""
    A = as_square(A)
    return theta_conj(A.conj().T)


def flip(n: int) -> np.ndarray:
    if n <= 0:
        raise ValueError(f"flip needs n >= 1, got {n}")
    idx = np.arange(n * n)
    j, k = np.divmod(idx, n)
    F = np.zeros((n * n, n * n), dtype=complex)
    F[k * n + j, idx] = 1.0
    return F


def tensor(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def vectorize(A) -> np.ndarray:
    A = as_matrix(A)
    if A.ndim != 2:
        raise ValueError(f"vectorize expects a matrix, got shape {A.shape}")
    return A.reshape(-1, order="F")


def devectorize(v, n: int) -> np.ndarray:
    v = as_matrix(v).reshape(-1)
    if v.size != n * n:
        raise ValueError(f"Cannot reshape a vector of length {v.size} into {n}x{n}")
    return v.reshape((n, n), order="F")


def hermitian_eig(A, tol: Optional[float] = None) -> HermitianEig:
    tol = rel_tol_or_default(tol)
    A = as_square(A)
    scale = opnorm(A)
    asymmetry = opnorm(A - A.conj().T)
    if asymmetry > tol * max(scale, np.finfo(float).tiny):
        raise ValueError(f"Matrix is not Hermitian: ||A - A*|| = {asymmetry:.3e} (||A|| = {scale:.3e})")
    eigenvalues, eigenvectors = scipy.linalg.eigh((A + A.conj().T) / 2)
    return HermitianEig(eigenvalues, eigenvectors)


def _retained(eig: HermitianEig, rel_tol: float) -> np.ndarray:
    """Mask of eigenpairs above the relative cutoff; raises on negative spectrum."""
    values = eig.eigenvalues
    lam_max = float(np.max(np.abs(values))) if values.size else 0.0
    if values.size and values[0] < -rel_tol * lam_max:
        raise ValueError(f"Matrix is not positive semidefinite: eigenvalue {values[0]:.3e} "
                         f"(largest {lam_max:.3e})")
    return values > rel_tol * lam_max


def support_projection(A, rel_tol: Optional[float] = None) -> np.ndarray:
    rel_tol = rel_tol_or_default(rel_tol)
    eig = hermitian_eig(A, rel_tol)
    V = eig.eigenvectors[:, _retained(eig, rel_tol)]
    return V @ V.conj().T


def support_rank(A, rel_tol: Optional[float] = None) -> int:
    rel_tol = rel_tol_or_default(rel_tol)
    eig = hermitian_eig(A, rel_tol)
    return int(np.count_nonzero(_retained(eig, rel_tol)))


def log_on_support(A, rel_tol: Optional[float] = None) -> np.ndarray:
    """Natural log on the support; zero on its orthogonal complement."""
    rel_tol = rel_tol_or_default(rel_tol)
    eig = hermitian_eig(A, rel_tol)
    keep = _retained(eig, rel_tol)
    V = eig.eigenvectors[:, keep]
    return (V * np.log(eig.eigenvalues[keep])) @ V.conj().T


def power_on_support(A, power: float, rel_tol: Optional[float] = None) -> np.ndarray:
    rel_tol = rel_tol_or_default(rel_tol)
    eig = hermitian_eig(A, rel_tol)
    keep = _retained(eig, rel_tol)
    V = eig.eigenvectors[:, keep]
    return (V * np.power(eig.eigenvalues[keep], power)) @ V.conj().T


def span_basis(mats: Sequence, rel_tol: Optional[float] = None) -> SpanBasis:
    """
    Orthonormal basis of the span of vectors or matrices (HS geometry).
    Generators are normalised before the SVD so the numerical rank does not
    depend on their individual scales; generators below rel_tol of the largest
    norm count as zero.
    """
    rel_tol = rel_tol_or_default(rel_tol)
    if len(mats) == 0:
        raise ValueError("span_basis needs at least one generator")
    arrays = [as_matrix(m) for m in mats]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise ValueError("All generators of a span must share one shape")
    columns = np.column_stack([vectorize(a) if a.ndim == 2 else a.reshape(-1) for a in arrays])
    ambient_dim = columns.shape[0]
    norms = np.linalg.norm(columns, axis=0)
    max_norm = float(norms.max())
    if max_norm == 0.0:
        return SpanBasis(ambient_dim, np.zeros((ambient_dim, 0), dtype=complex), rel_tol, shape)
    keep = norms > rel_tol * max_norm
    columns = columns[:, keep] / norms[keep]
    U, s, _ = scipy.linalg.svd(columns, full_matrices=False)
    rank = int(np.count_nonzero(s > rel_tol * s[0]))
    return SpanBasis(ambient_dim, U[:, :rank], rel_tol, shape)


def expm(A) -> np.ndarray:
    """Matrix exponential (Pade scaling-and-squaring)."""
    return scipy.linalg.expm(as_square(A))
