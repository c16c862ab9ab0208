# qmsep/services/balance.py - Quantum detailed-balance checks
"""
Detailed balance with respect to the KMS pairing, with and without the
reversing map Theta(x) = x^T.

In special form the jumps are linearly independent and rho is invertible, so
the matrices L_l rho^1/2 are independent too. The multiplicity-space
coefficients u solving

    rho^1/2 L_k*        = sum_l u_kl L_l rho^1/2     (plain)
    rho^1/2 Theta(L_k)  = sum_l u_kl L_l rho^1/2     (with Theta)

are therefore unique when they exist, and a least-squares fit either finds
them or proves there are none. Detailed balance then reduces to u being a
symmetric unitary (plain) or a self-adjoint unitary plus the drift condition
rho^1/2 Theta(G) = G rho^1/2 (with Theta).
"""
import logging
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict

from qmsep.config import verdict_tol_or_default
from qmsep.services.errors import NumericalInconsistencyError
from qmsep.services.gksl import (
    GkslGenerator,
    SuperoperatorKind,
    as_state,
    kms_dual,
    require_special,
    superoperator,
)
from qmsep.services.matops import flip, opnorm, theta_map, vectorize

logger = logging.getLogger(__name__)


class BalanceReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    tolerance: float
    sqdb_holds: Optional[bool] = None
    u: Optional[np.ndarray] = None
    residual_jump: Optional[float] = None
    residual_unitary: Optional[float] = None
    residual_symmetric: Optional[float] = None

    sqdb_theta_holds: Optional[bool] = None
    u_theta: Optional[np.ndarray] = None
    residual_jump_theta: Optional[float] = None
    residual_unitary_theta: Optional[float] = None
    residual_selfadjoint: Optional[float] = None
    g_condition_residual: Optional[float] = None

    K: Optional[np.ndarray] = None
    derivation_residual: Optional[float] = None
    K_rho_commutator: Optional[float] = None

    g_theta_invariant: Optional[bool] = None
    g_commutes_with_rho: Optional[bool] = None


def _targets(gen: GkslGenerator, rho, theta: bool):
    s = rho.sqrt
    if theta:
        return [s @ theta_map(L) for L in gen.jumps]
    return [s @ L.conj().T for L in gen.jumps]


def _fit_witness(gen: GkslGenerator, rho, theta: bool) -> Tuple[np.ndarray, float]:
    s = rho.sqrt
    B = np.column_stack([vectorize(L @ s) for L in gen.jumps])
    A = np.column_stack([vectorize(X) for X in _targets(gen, rho, theta)])
    solution, *_ = scipy.linalg.lstsq(B, A)
    u = solution.T
    residual = float(np.max(np.linalg.norm(B @ solution - A, axis=0)))
    return u, residual


def verify_witness(gen: GkslGenerator, rho, u, theta: bool = False) -> float:
    """max_k ||target_k - sum_l u_kl L_l rho^1/2||_HS computed directly from the matrices."""
    rho = as_state(rho)
    u = np.asarray(u, dtype=complex)
    d = gen.num_jumps
    if u.shape != (d, d):
        raise ValueError(f"Witness must be {d}x{d}, got {u.shape}")
    s = rho.sqrt
    targets = _targets(gen, rho, theta)
    residual = 0.0
    for k in range(d):
        combination = sum(u[k, l] * gen.jumps[l] @ s for l in range(d))
        residual = max(residual, float(np.linalg.norm(targets[k] - combination)))
    return residual


def _check_preconditions(gen: GkslGenerator, rho, tol: float):
    rho = as_state(rho)
    if not rho.is_faithful:
        raise ValueError("Detailed-balance checks need a faithful state")
    require_special(gen, rho, tol)
    if not gen.jumps:
        raise ValueError("Detailed-balance checks need at least one jump operator")
    return rho


def _verified(gen: GkslGenerator, rho, u: np.ndarray, theta: bool, tol: float) -> None:
    residual = verify_witness(gen, rho, u, theta)
    if residual > tol * gen.rate_scale:
        raise NumericalInconsistencyError(f"Discovered witness fails direct verification ({residual:.3e})")


def sqdb_check(gen: GkslGenerator, rho, tol: Optional[float] = None) -> BalanceReport:
    tol = verdict_tol_or_default(tol)
    rho = _check_preconditions(gen, rho, tol)
    u, residual = _fit_witness(gen, rho, theta=False)
    d = gen.num_jumps
    unitary = opnorm(u @ u.conj().T - np.eye(d))
    symmetric = opnorm(u - u.T)
    holds = residual <= tol * gen.rate_scale and unitary <= tol and symmetric <= tol
    if holds:
        _verified(gen, rho, u, False, tol)
    logger.info(f"{'✅' if holds else '❌'} Detailed balance: jump residual {residual:.3e}, "
                f"unitarity {unitary:.3e}, symmetry {symmetric:.3e}")
    return BalanceReport(tolerance=tol, sqdb_holds=holds, u=u, residual_jump=residual,
                         residual_unitary=unitary, residual_symmetric=symmetric)


def g_condition_residual(gen: GkslGenerator, rho) -> float:
    """||rho^1/2 Theta(G) - G rho^1/2||."""
    rho = as_state(rho)
    return opnorm(rho.sqrt @ theta_map(gen.G) - gen.G @ rho.sqrt)


def sqdb_theta_check(gen: GkslGenerator, rho, tol: Optional[float] = None) -> BalanceReport:
    tol = verdict_tol_or_default(tol)
    rho = _check_preconditions(gen, rho, tol)
    u, residual = _fit_witness(gen, rho, theta=True)
    d = gen.num_jumps
    unitary = opnorm(u @ u.conj().T - np.eye(d))
    selfadjoint = opnorm(u - u.conj().T)
    g_residual = g_condition_residual(gen, rho)
    scale = gen.rate_scale
    holds = (residual <= tol * scale and unitary <= tol and selfadjoint <= tol
             and g_residual <= tol * scale)
    if holds:
        _verified(gen, rho, u, True, tol)
    logger.info(f"{'✅' if holds else '❌'} Detailed balance with time reversal: jump residual "
                f"{residual:.3e}, drift residual {g_residual:.3e}")
    return BalanceReport(tolerance=tol, sqdb_theta_holds=holds, u_theta=u, residual_jump_theta=residual,
                         residual_unitary_theta=unitary, residual_selfadjoint=selfadjoint,
                         g_condition_residual=g_residual)


def theta_superoperator(n: int) -> np.ndarray:
    """Matrix of Theta on column-stacked operators (the transposition permutation)."""
    return flip(n)


def _hermitian_basis(n: int):
    """Orthonormal (HS) basis of the real space of n x n Hermitian matrices."""
    basis = []
    for j in range(n):
        E = np.zeros((n, n), dtype=complex)
        E[j, j] = 1.0
        basis.append(E)
    for j in range(n):
        for k in range(j + 1, n):
            S = np.zeros((n, n), dtype=complex)
            S[j, k] = S[k, j] = 1 / np.sqrt(2)
            A = np.zeros((n, n), dtype=complex)
            A[j, k] = 1j / np.sqrt(2)
            A[k, j] = -1j / np.sqrt(2)
            basis.extend([S, A])
    return basis


def _commutator_superoperator(K: np.ndarray) -> np.ndarray:
    """Matrix of x -> i[K, x]."""
    eye = np.eye(K.shape[0], dtype=complex)
    return 1j * (np.kron(eye, K) - np.kron(K.T, eye))


def derivation_gap(gen: GkslGenerator, rho, tol: Optional[float] = None) -> Tuple[np.ndarray, float, float]:
    """
    Fits L' - Theta L Theta = i[K, .] with K Hermitian and traceless, where L'
    is the KMS dual. Returns (K, HS residual of the fit, ||[K, rho]||).
    """
    tol = verdict_tol_or_default(tol)
    rho = _check_preconditions(gen, rho, tol)
    n = gen.dim
    dual = kms_dual(gen, rho, tol)
    T = theta_superoperator(n)
    reversed_mat = T @ superoperator(gen, SuperoperatorKind.HEISENBERG).mat @ T
    gap = superoperator(dual, SuperoperatorKind.HEISENBERG).mat - reversed_mat

    basis = _hermitian_basis(n)
    design = np.column_stack([_commutator_superoperator(h).reshape(-1) for h in basis])
    target = gap.reshape(-1)
    design_real = np.vstack([design.real, design.imag])
    target_real = np.concatenate([target.real, target.imag])
    coeffs, *_ = scipy.linalg.lstsq(design_real, target_real)

    K = sum(c * h for c, h in zip(coeffs, basis))
    K = K - np.trace(K) / n * np.eye(n)
    residual = float(np.linalg.norm(gap - _commutator_superoperator(K)))
    commutator = opnorm(K @ rho.mat - rho.mat @ K)
    return K, residual, commutator


def balance_report(gen: GkslGenerator, rho, tol: Optional[float] = None) -> BalanceReport:
    tol = verdict_tol_or_default(tol)
    rho = as_state(rho)
    plain = sqdb_check(gen, rho, tol)
    reversed_ = sqdb_theta_check(gen, rho, tol)
    K, residual, commutator = derivation_gap(gen, rho, tol)
    scale = gen.rate_scale
    fields = {**plain.model_dump(exclude_none=True), **reversed_.model_dump(exclude_none=True)}
    fields.update(K=K, derivation_residual=residual, K_rho_commutator=commutator,
                  g_theta_invariant=opnorm(theta_map(gen.G) - gen.G) <= tol * scale,
                  g_commutes_with_rho=opnorm(gen.G @ rho.mat - rho.mat @ gen.G) <= tol * scale)
    return BalanceReport(**fields)
