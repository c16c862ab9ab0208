# qmsep/services/entropy.py - Relative entropies and the entropy-production rate
import logging
import math
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from qmsep.config import rel_tol_or_default, subspace_tol_or_default, verdict_tol_or_default
from qmsep.services.errors import NumericalInconsistencyError
from qmsep.services.gksl import GkslGenerator, as_state, lindblad_residual, require_special
from qmsep.services.matops import log_on_support, opnorm, support_projection
from qmsep.services.support import fbs_check, phi_support_diagnosis
from qmsep.services.twopoint import TwoPointEvolution, phi_backward, phi_forward

logger = logging.getLogger(__name__)

# Rounding floor below which a negative divergence is treated as zero.
NEGATIVE_FLOOR = -1e-10


class LimitSample(BaseModel):
    t: float
    S: float
    S_over_t: float


class EpReport(BaseModel):
    """Entropy production in nats; ``value`` is math.inf when the Phi supports differ."""

    value: float
    support_diagnosis: Dict[str, Any]
    formula_terms: Dict[str, List[float]] = Field(default_factory=dict)
    limit_trace: Optional[List[LimitSample]] = None
    fbs_method: Optional[str] = None
    fbs: Optional[Dict[str, Any]] = None
    special_form: Dict[str, Any] = Field(default_factory=dict)
    tolerance: float
    log_base: str = "nats"

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value)


def _same_support(P: np.ndarray, Q: np.ndarray, subspace_tol: float) -> bool:
    return _contained(P, Q, subspace_tol) and _contained(Q, P, subspace_tol)


def _contained(P: np.ndarray, Q: np.ndarray, subspace_tol: float) -> bool:
    """supp(P) inside supp(Q)."""
    eye = np.eye(P.shape[0])
    return opnorm((eye - Q) @ P) <= subspace_tol


def _clamped(value: float, what: str) -> float:
    if value < NEGATIVE_FLOOR:
        raise NumericalInconsistencyError(f"{what} came out negative ({value:.3e})")
    return max(value, 0.0)


def relative_entropy(rho, sigma, rel_tol: Optional[float] = None,
                     subspace_tol: Optional[float] = None) -> float:
    """S(rho, sigma) = tr rho (log rho - log sigma), +inf unless supp rho is inside supp sigma."""
    rel_tol = rel_tol_or_default(rel_tol)
    subspace_tol = subspace_tol_or_default(subspace_tol)
    rho, sigma = as_state(rho), as_state(sigma)
    if rho.dim != sigma.dim:
        raise ValueError(f"Dimension mismatch: {rho.dim} vs {sigma.dim}")
    P, Q = support_projection(rho.mat, rel_tol), support_projection(sigma.mat, rel_tol)
    if not _contained(P, Q, subspace_tol):
        return math.inf
    diff = log_on_support(rho.mat, rel_tol) - log_on_support(sigma.mat, rel_tol)
    return _clamped(float(np.real(np.trace(rho.mat @ diff))), "Relative entropy")


def _symmetrized_divergence(A: np.ndarray, B: np.ndarray, rel_tol: float) -> float:
    """1/2 tr (A - B)(log A - log B) for positive A, B with a common support."""
    diff = log_on_support(A, rel_tol) - log_on_support(B, rel_tol)
    return float(np.real(np.trace((A - B) @ diff))) / 2


def symmetric_relative_entropy(rho, sigma, rel_tol: Optional[float] = None,
                               subspace_tol: Optional[float] = None) -> float:
    rel_tol = rel_tol_or_default(rel_tol)
    subspace_tol = subspace_tol_or_default(subspace_tol)
    rho, sigma = as_state(rho), as_state(sigma)
    if rho.dim != sigma.dim:
        raise ValueError(f"Dimension mismatch: {rho.dim} vs {sigma.dim}")
    P, Q = support_projection(rho.mat, rel_tol), support_projection(sigma.mat, rel_tol)
    if not _same_support(P, Q, subspace_tol):
        return math.inf
    return _clamped(_symmetrized_divergence(rho.mat, sigma.mat, rel_tol), "Symmetric relative entropy")


def entropy_production(gen: GkslGenerator, rho, rel_tol: Optional[float] = None,
                       tol: Optional[float] = None, check_fbs: bool = True,
                       subspace_tol: Optional[float] = None) -> EpReport:
    """
    ep = 1/2 tr (Phi_fwd(D) - Phi_bwd(D)) (log Phi_fwd(D) - log Phi_bwd(D)),
    infinite when the supports of the two Phi images differ.
    """
    rel_tol = rel_tol_or_default(rel_tol)
    tol = verdict_tol_or_default(tol)
    rho = as_state(rho)
    if not rho.is_faithful:
        raise ValueError("Entropy production needs a faithful state")
    residual = lindblad_residual(gen, rho)
    if residual > tol * gen.rate_scale:
        raise ValueError(f"State is not invariant: ||L_*(rho)|| = {residual:.3e}")
    require_special(gen, rho, tol)

    diagnosis = phi_support_diagnosis(gen, rho, rel_tol, subspace_tol)
    special_form = {"num_jumps": gen.num_jumps,
                    "normalised_against_given_state": gen.is_special_for is not None}
    fbs = fbs_check(gen, rho, tol, rel_tol, subspace_tol) if check_fbs else None

    phi_fwd = phi_forward(gen, rho).mat
    phi_bwd = phi_backward(gen, rho).mat
    terms = {"forward_eigenvalues": np.linalg.eigvalsh(phi_fwd).tolist(),
             "backward_eigenvalues": np.linalg.eigvalsh(phi_bwd).tolist()}

    if not diagnosis["spans_equal"]:
        value = math.inf
        logger.info("ℹ️ Phi-image supports differ; entropy production is infinite")
    elif opnorm(phi_fwd - phi_bwd) <= tol * gen.rate_scale:
        value = 0.0
    else:
        value = _clamped(_symmetrized_divergence(phi_fwd, phi_bwd, rel_tol), "Entropy production")

    if fbs is not None and fbs["method"] == "sampled":
        logger.warning("⚠️ Equal supports of the two-point densities were only sampled, not proved")
    return EpReport(value=value, support_diagnosis=diagnosis, formula_terms=terms,
                    fbs_method=fbs["method"] if fbs else None, fbs=fbs,
                    special_form=special_form, tolerance=tol)


def ep_limit_estimate(gen: GkslGenerator, rho, t_grid: Sequence[float],
                      rel_tol: Optional[float] = None,
                      subspace_tol: Optional[float] = None) -> List[LimitSample]:
    """S(D_fwd(t), D_bwd(t)) / t on a grid, largest t first; S(0) = 0 so these are difference quotients."""
    rel_tol = rel_tol_or_default(rel_tol)
    times = [float(t) for t in t_grid]
    if not times or any(t <= 0 for t in times):
        raise ValueError("t_grid must be a non-empty list of positive times")
    evolution = TwoPointEvolution(gen, rho)
    samples = []
    for t in sorted(times, reverse=True):
        fwd, bwd = evolution.pair(t)
        S = symmetric_relative_entropy(fwd.as_state(), bwd.as_state(), rel_tol, subspace_tol)
        samples.append(LimitSample(t=t, S=S, S_over_t=S / t))
    return samples
