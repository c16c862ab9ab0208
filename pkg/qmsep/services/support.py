# qmsep/services/support.py - Supports of evolved states and the equal-support gate
"""
Support of T_*t(|u><u|) is P_t S(u), where P_t = exp(tG) and S(u) is the
smallest subspace containing u that is invariant under the algebra generated
by the jumps and their repeated commutators with G. The forward/backward
two-point densities have equal supports when these spaces match, which is
what the entropy-production formula needs.
"""
import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from qmsep.config import rel_tol_or_default, subspace_tol_or_default, verdict_tol_or_default
from qmsep.services.errors import NumericalInconsistencyError
from qmsep.services.gksl import GkslGenerator, as_state, evolve, require_special
from qmsep.services.matops import (
    SpanBasis,
    expm,
    opnorm,
    span_basis,
    support_projection,
    support_rank,
    theta_map,
)
from qmsep.services.twopoint import (
    TwoPointEvolution,
    build_r,
    lifted_backward,
    lifted_forward,
    phi_backward,
    phi_forward,
)

logger = logging.getLogger(__name__)

FBS_SAMPLE_TIMES = (1e-2, 1e-1, 1.0)


class ReachabilityReport:
    def __init__(self, space: SpanBasis, g_invariant: bool, g_invariance_residual: float,
                 truncation_order: int):
        self.space = space
        self.g_invariant = g_invariant
        self.g_invariance_residual = g_invariance_residual
        self.truncation_order = truncation_order

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def is_full(self) -> bool:
        return self.space.dim == self.space.ambient_dim

    def __repr__(self) -> str:
        return (f"ReachabilityReport(dim={self.dim}, g_invariant={self.g_invariant}, "
                f"truncation_order={self.truncation_order})")


def _commutator_family(gen: GkslGenerator, max_m: Optional[int], rel_tol: float) -> Tuple[List[np.ndarray], int]:
    n = gen.dim
    max_m = n * n - 1 if max_m is None else max_m
    if max_m < 0:
        raise ValueError(f"max_m must be non-negative, got {max_m}")
    if not gen.jumps:
        return [], 0

    G = gen.G
    family = list(gen.jumps)
    current = list(gen.jumps)
    rank = span_basis(family, rel_tol).dim
    order = 0
    for m in range(1, max_m + 1):
        current = [G @ X - X @ G for X in current]
        candidate = family + current
        new_rank = span_basis(candidate, rel_tol).dim
        if new_rank == rank:
            break
        family, rank, order = candidate, new_rank, m
    return family, order


def commutator_family(gen: GkslGenerator, max_m: Optional[int] = None,
                      rel_tol: Optional[float] = None) -> List[np.ndarray]:
    """delta_G^m(L_l) = [G, ... [G, L_l]] for m = 0..max_m, stopping once the span saturates."""
    family, _ = _commutator_family(gen, max_m, rel_tol_or_default(rel_tol))
    return family


def _g_invariance(G: np.ndarray, space: SpanBasis) -> float:
    P = space.projector()
    return opnorm(G @ P - P @ G @ P)


def reachable_space(gen: GkslGenerator, u, max_m: Optional[int] = None,
                    rel_tol: Optional[float] = None, tol: Optional[float] = None) -> ReachabilityReport:
    rel_tol = rel_tol_or_default(rel_tol)
    tol = verdict_tol_or_default(tol)
    u = np.asarray(u, dtype=complex).reshape(-1)
    if u.size != gen.dim or np.linalg.norm(u) == 0:
        raise ValueError("Starting vector must be non-zero and match the generator dimension")

    family, order = _commutator_family(gen, max_m, rel_tol)
    space = span_basis([u], rel_tol)
    stable_sweeps = 0
    while stable_sweeps < 2 and space.dim < space.ambient_dim:
        columns = [space.basis[:, k] for k in range(space.dim)]
        vectors = columns + [X @ v for X in family for v in columns]
        grown = span_basis(vectors, rel_tol)
        stable_sweeps = stable_sweeps + 1 if grown.dim == space.dim else 0
        space = grown

    residual = _g_invariance(gen.G, space)
    return ReachabilityReport(space, residual <= tol * gen.rate_scale, residual, order)


def support_at_t(gen: GkslGenerator, u, t: float, rel_tol: Optional[float] = None) -> SpanBasis:
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    report = reachable_space(gen, u, rel_tol=rel_tol)
    P_t = expm(t * gen.G)
    moved = P_t @ report.space.basis
    return span_basis([moved[:, k] for k in range(moved.shape[1])], rel_tol)


def evolved_support(gen: GkslGenerator, u, t: float, rel_tol: Optional[float] = None) -> np.ndarray:
    """Support projection of T_*t(|u><u|) computed from the evolved state itself."""
    u = np.asarray(u, dtype=complex).reshape(-1)
    u = u / np.linalg.norm(u)
    state = evolve(gen, np.outer(u, u.conj()), t)
    return support_projection(state.mat, rel_tol)


def hs_span_condition(gen: GkslGenerator, rho, tol: Optional[float] = None, rel_tol: Optional[float] = None,
                      subspace_tol: Optional[float] = None) -> Tuple[bool, Dict[str, Any]]:
    """
    Compares span{L_l rho^1/2} with span{rho^1/2 Theta(L_l)}; these are the
    matrix forms of the supports of the backward and forward Phi images.
    """
    rho = as_state(rho)
    require_special(gen, rho, tol)
    if not gen.jumps:
        return True, {"jump_span_dim": 0, "reversed_span_dim": 0, "residual": 0.0}
    s = rho.sqrt
    jump_span = span_basis([L @ s for L in gen.jumps], rel_tol)
    reversed_span = span_basis([s @ theta_map(L) for L in gen.jumps], rel_tol)
    residual = jump_span.same_subspace_residual(reversed_span)
    holds = jump_span.dim == reversed_span.dim and residual <= subspace_tol_or_default(subspace_tol)
    return holds, {"jump_span_dim": jump_span.dim, "reversed_span_dim": reversed_span.dim,
                   "residual": residual}


def _projection_comparison(A: np.ndarray, B: np.ndarray, rel_tol: Optional[float],
                           subspace_tol: Optional[float]) -> Tuple[bool, Dict[str, Any]]:
    P_a = support_projection(A, rel_tol)
    P_b = support_projection(B, rel_tol)
    eye = np.eye(A.shape[0])
    residual = max(opnorm((eye - P_a) @ P_b), opnorm((eye - P_b) @ P_a))
    dim_a = support_rank(A, rel_tol)
    dim_b = support_rank(B, rel_tol)
    holds = dim_a == dim_b and residual <= subspace_tol_or_default(subspace_tol)
    return holds, {"forward_dim": dim_a, "backward_dim": dim_b, "residual": residual}


def phi_support_diagnosis(gen: GkslGenerator, rho, rel_tol: Optional[float] = None,
                          subspace_tol: Optional[float] = None) -> Dict[str, Any]:
    rho = as_state(rho)
    if not gen.jumps:
        return {"spans_equal": True, "forward_dim": 0, "backward_dim": 0, "residual": 0.0}
    equal, details = _projection_comparison(phi_forward(gen, rho).mat, phi_backward(gen, rho).mat, rel_tol,
                                            subspace_tol)
    span_equal, span_details = hs_span_condition(gen, rho, rel_tol=rel_tol, subspace_tol=subspace_tol)
    if equal != span_equal:
        raise NumericalInconsistencyError(
            f"Phi-image supports ({details}) and jump spans ({span_details}) disagree; "
            f"the numerical rank is unstable, try adjusting QMSEP_REL_TOL")
    return {"spans_equal": equal, **details}


def phi_support_check(gen: GkslGenerator, rho, rel_tol: Optional[float] = None,
                      subspace_tol: Optional[float] = None) -> bool:
    return phi_support_diagnosis(gen, rho, rel_tol, subspace_tol)["spans_equal"]


def fbs_check(gen: GkslGenerator, rho, tol: Optional[float] = None, rel_tol: Optional[float] = None,
              subspace_tol: Optional[float] = None) -> Dict[str, Any]:
    """
    Decides whether the forward and backward two-point densities share their
    support for every t > 0. Methods, tried in order: "theorem" (drift
    condition plus jump spans), "full-space", "constant-support" and finally
    "sampled", which only compares supports at a few times.
    """
    tol = verdict_tol_or_default(tol)
    rho = as_state(rho)
    require_special(gen, rho, tol)

    s = rho.sqrt
    g_residual = opnorm(s @ theta_map(gen.G) - gen.G @ s)
    if g_residual <= tol * gen.rate_scale:
        holds, dims = hs_span_condition(gen, rho, tol, rel_tol, subspace_tol)
        return {"holds": holds, "method": "theorem", "details": {"g_condition_residual": g_residual, **dims}}

    r = build_r(rho, tol).vec
    forward = reachable_space(lifted_forward(gen), r, rel_tol=rel_tol, tol=tol)
    backward = reachable_space(lifted_backward(gen), r, rel_tol=rel_tol, tol=tol)
    details: Dict[str, Any] = {"g_condition_residual": g_residual,
                               "forward_dim": forward.dim, "backward_dim": backward.dim}
    if forward.is_full and backward.is_full:
        return {"holds": True, "method": "full-space", "details": details}
    if forward.g_invariant and backward.g_invariant:
        holds = forward.space.same_subspace(backward.space, subspace_tol)
        details["residual"] = forward.space.same_subspace_residual(backward.space)
        return {"holds": holds, "method": "constant-support", "details": details}

    logger.warning("⚠️ Equal-support assumption can only be sampled for this model")
    evolution = TwoPointEvolution(gen, rho, tol)
    samples = []
    for t in FBS_SAMPLE_TIMES:
        fwd, bwd = evolution.pair(t)
        equal, sample = _projection_comparison(fwd.mat, bwd.mat, rel_tol, subspace_tol)
        samples.append({"t": t, "equal": equal, **sample})
    details["samples"] = samples
    return {"holds": all(sample["equal"] for sample in samples), "method": "sampled", "details": details}
