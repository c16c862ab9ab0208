# qmsep/services/models.py - Example model families and the classical oracle
"""
Builders for three model families:

- the cycle model: jumps sqrt(lambda)*S and sqrt(mu)*S* for the cyclic shift S,
  invariant state 1/n;
- generic models: one jump sqrt(gamma_lm)|e_m><e_l| per positive classical rate,
  with a diagonal invariant state from the classical chain;
- the two-level model with a real antisymmetric (times i) Hamiltonian, which
  satisfies detailed balance without time reversal but not with it.

Also holds the classical entropy-production sum and the construction of an
eigenbasis of rho made of real vectors.
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from qmsep.config import rel_tol_or_default, verdict_tol_or_default
from qmsep.services.gksl import DensityMatrix, GkslGenerator, build_generator, make_special
from qmsep.services.matops import as_square, opnorm

logger = logging.getLogger(__name__)


class CycleSpec(BaseModel):
    n: int = Field(ge=3)
    lam: float = Field(gt=0, description="Rate of the forward shift")
    mu: float = Field(gt=0, description="Rate of the backward shift")
    h_diag: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_h(self) -> "CycleSpec":
        if self.h_diag is None:
            self.h_diag = [0.0] * self.n
        elif len(self.h_diag) != self.n:
            raise ValueError(f"h_diag must have length {self.n}, got {len(self.h_diag)}")
        return self


class GenericSpec(BaseModel):
    n: int = Field(ge=2)
    gamma: List[List[float]]
    h_diag: Optional[List[float]] = None

    @field_validator("gamma")
    @classmethod
    def _check_rates(cls, gamma: List[List[float]]) -> List[List[float]]:
        rates = np.asarray(gamma, dtype=float)
        if rates.ndim != 2 or rates.shape[0] != rates.shape[1]:
            raise ValueError("gamma must be a square matrix")
        if not np.all(np.isfinite(rates)) or np.any(rates < 0):
            raise ValueError("gamma entries must be finite and non-negative")
        if np.any(np.diag(rates) != 0):
            raise ValueError("gamma must have a zero diagonal")
        return gamma

    @model_validator(mode="after")
    def _check_shapes(self) -> "GenericSpec":
        if len(self.gamma) != self.n:
            raise ValueError(f"gamma must be {self.n}x{self.n}")
        if self.h_diag is None:
            self.h_diag = [0.0] * self.n
        elif len(self.h_diag) != self.n:
            raise ValueError(f"h_diag must have length {self.n}, got {len(self.h_diag)}")
        return self

    @property
    def rates(self) -> np.ndarray:
        return np.asarray(self.gamma, dtype=float)


def shift_matrix(n: int) -> np.ndarray:
    """S e_j = e_{j+1 mod n}."""
    return np.roll(np.eye(n, dtype=complex), 1, axis=0)


def cycle_model(spec: CycleSpec) -> Tuple[GkslGenerator, DensityMatrix]:
    S = shift_matrix(spec.n)
    H = np.diag(np.asarray(spec.h_diag, dtype=complex))
    rho = DensityMatrix(np.eye(spec.n) / spec.n)
    gen = build_generator(H, [math.sqrt(spec.lam) * S, math.sqrt(spec.mu) * S.conj().T])
    return make_special(gen, rho), rho


def generic_model(spec: GenericSpec) -> GkslGenerator:
    n = spec.n
    rates = spec.rates
    jumps = []
    for l in range(n):
        for m in range(n):
            if rates[l, m] > 0:
                L = np.zeros((n, n), dtype=complex)
                L[m, l] = math.sqrt(rates[l, m])
                jumps.append(L)
    if not jumps:
        raise ValueError("Generic model needs at least one positive rate")
    return build_generator(np.diag(np.asarray(spec.h_diag, dtype=complex)), jumps)


def classical_generator(gamma) -> np.ndarray:
    """Q-matrix of the classical chain: Q[l, m] = gamma_lm off the diagonal, rows sum to zero."""
    rates = np.asarray(gamma, dtype=float)
    Q = rates.copy()
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def generic_invariant_state(spec: GenericSpec, weights: Optional[Sequence[float]] = None) -> DensityMatrix:
    """
    Diagonal invariant state built from the stationary distributions of the
    closed communicating classes, mixed with ``weights`` (equal by default).
    """
    rates = spec.rates
    Q = classical_generator(rates)
    n_components, labels = connected_components(csr_matrix(rates > 0), directed=True, connection="strong")

    closed = []
    for c in range(n_components):
        members = np.flatnonzero(labels == c)
        outside = np.flatnonzero(labels != c)
        if outside.size == 0 or not np.any(rates[np.ix_(members, outside)] > 0):
            closed.append(members)

    if weights is None:
        weights = [1.0 / len(closed)] * len(closed)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(closed),):
        raise ValueError(f"Expected {len(closed)} weights (one per closed class), got {weights.size}")
    if np.any(weights <= 0):
        raise ValueError("Class weights must be positive")
    weights = weights / weights.sum()

    probabilities = np.zeros(spec.n)
    for members, weight in zip(closed, weights):
        block = Q[np.ix_(members, members)]
        stationary = scipy.linalg.null_space(block.T)[:, 0]
        stationary = np.abs(stationary) / np.abs(stationary).sum()
        probabilities[members] = weight * stationary

    if len(closed) > 1:
        logger.info(f"ℹ️ Chain has {len(closed)} closed classes; mixing with weights {weights.tolist()}")
    return DensityMatrix(np.diag(probabilities))


def classical_ep(gamma, rho_diag) -> float:
    rates = np.asarray(gamma, dtype=float)
    p = np.asarray(rho_diag, dtype=float)
    if rates.ndim != 2 or rates.shape[0] != rates.shape[1] or p.shape != (rates.shape[0],):
        raise ValueError("gamma must be n x n and rho_diag of length n")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-10:
        raise ValueError("rho_diag must be a probability vector")

    total = 0.0
    n = rates.shape[0]
    for l in range(n):
        for m in range(n):
            if l == m or rates[l, m] <= 0:
                continue
            forward = p[l] * rates[l, m]
            backward = p[m] * rates[m, l]
            if forward > 0 and backward == 0:
                return math.inf
            if forward == 0 or backward == 0:
                continue
            total += 0.5 * (forward - backward) * math.log(forward / backward)
    return max(total, 0.0)


def two_level_model(kappa: float) -> Tuple[GkslGenerator, DensityMatrix]:
    if kappa == 0:
        raise ValueError("kappa must be non-zero")
    L1 = np.array([[0, 1], [0, 0]], dtype=complex)
    L2 = np.array([[0, 0], [1, 0]], dtype=complex)
    H = 1j * kappa * (L2 - L1)
    rho = DensityMatrix(np.eye(2) / 2)
    return make_special(build_generator(H, [L1, L2]), rho), rho


def _sign_fixed(f: np.ndarray) -> np.ndarray:
    pivot = f[np.argmax(np.abs(f))]
    return f if pivot >= 0 else -f


def real_eigenspace_basis(E: np.ndarray, rel_tol: Optional[float] = None) -> List[np.ndarray]:
    """
    Real orthonormal basis of the span of the columns of E, assuming that span
    is closed under entrywise conjugation. The folded vectors e + conj(e)
    (or i*e when that vanishes) come first, then the imaginary parts, and a
    pivoted QR orthonormalises them.
    """
    rel_tol = rel_tol_or_default(rel_tol)
    E = np.asarray(E, dtype=complex)
    candidates = []
    for k in range(E.shape[1]):
        e = E[:, k]
        folded = e + e.conj()
        candidates.append(np.real(folded) if np.linalg.norm(folded) > 1e-8 else np.real(1j * e))
    candidates.extend(np.imag(E[:, k]) for k in range(E.shape[1]))
    Q, R, _ = scipy.linalg.qr(np.column_stack(candidates), mode="economic", pivoting=True)
    rank = E.shape[1]
    if abs(R[rank - 1, rank - 1]) <= rel_tol * max(abs(R[0, 0]), 1.0):
        raise ValueError("Eigenspace is not closed under the basis conjugation")
    return [_sign_fixed(Q[:, j]) for j in range(rank)]


def theta_eigenbasis(rho, tol: Optional[float] = None, rel_tol: Optional[float] = None) -> List[np.ndarray]:
    """Orthonormal eigenbasis of rho made of real vectors. Needs rho to have real entries."""
    tol = verdict_tol_or_default(tol)
    rel_tol = rel_tol_or_default(rel_tol)
    mat = rho.mat if isinstance(rho, DensityMatrix) else as_square(rho)
    if opnorm(mat - mat.conj()) > tol:
        raise ValueError("State does not commute with the basis conjugation (entries are not real)")
    values, vectors = scipy.linalg.eigh((mat + mat.conj().T) / 2)

    # eigenvalues come sorted, so clusters are runs of near-equal neighbours
    cluster_tol = rel_tol * max(1.0, float(np.max(np.abs(values))))
    clusters: List[List[int]] = [[0]]
    for idx in range(1, len(values)):
        if values[idx] - values[clusters[-1][-1]] <= cluster_tol:
            clusters[-1].append(idx)
        else:
            clusters.append([idx])

    basis: List[np.ndarray] = []
    for cluster in clusters:
        basis.extend(real_eigenspace_basis(vectors[:, cluster], rel_tol))
    basis.sort(key=lambda f: int(np.argmax(np.abs(f))))
    return basis
