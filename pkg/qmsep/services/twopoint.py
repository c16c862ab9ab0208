# qmsep/services/twopoint.py - Two-point states on h (x) h
"""
The reference vector r = sum_j sqrt(rho_j) f_j (x) f_j (f_j a real eigenbasis
of rho), the two-point density D = |r><r|, its forward and backward
evolutions

    D_fwd(t) = (I (x) T_*t)(D),     D_bwd(t) = (T_*t (x) I)(D),

and the images of D under the completely positive parts of the lifted
generators. The flip F exchanges the two tensor factors and maps one
evolution onto the other.
"""
import logging
from typing import Dict, Optional, Tuple

import numpy as np

from qmsep.config import verdict_tol_or_default
from qmsep.services.errors import NumericalInconsistencyError
from qmsep.services.gksl import (
    DensityMatrix,
    GkslGenerator,
    SuperoperatorKind,
    apply_Lstar,
    as_state,
    evolve,
    is_invariant,
    require_special,
    superoperator,
)
from qmsep.services.matops import flip, opnorm
from qmsep.services.models import theta_eigenbasis

logger = logging.getLogger(__name__)


class RVector:
    def __init__(self, vec: np.ndarray, source_state: DensityMatrix):
        self.vec = vec
        self.source_state = source_state

    @property
    def dim(self) -> int:
        return self.source_state.dim

    def projector(self) -> np.ndarray:
        return np.outer(self.vec, self.vec.conj())


class TwoPointDensity:
    """
    n^2 x n^2 operator on h (x) h tagged with how it was produced:
    "D", "forward", "backward", "phi_forward" or "phi_backward".
    Phi images are not normalised.
    """

    def __init__(self, mat: np.ndarray, tag: str, time: Optional[float] = None):
        self.mat = mat
        self.tag = tag
        self.time = time

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.mat)))

    def as_state(self) -> DensityMatrix:
        return DensityMatrix(self.mat)

    def __repr__(self) -> str:
        return f"TwoPointDensity(tag={self.tag!r}, time={self.time}, trace={self.trace:.6g})"


def build_r(rho, tol: Optional[float] = None) -> RVector:
    rho = as_state(rho)
    if not rho.is_faithful:
        raise ValueError("Reference vector needs a faithful state")
    basis = theta_eigenbasis(rho, tol)
    r = np.zeros(rho.dim * rho.dim, dtype=complex)
    for f in basis:
        weight = float(np.real(f @ rho.mat @ f))
        r += np.sqrt(max(weight, 0.0)) * np.kron(f, f)
    return RVector(r, rho)


def build_D(r: RVector) -> TwoPointDensity:
    return TwoPointDensity(r.projector(), tag="D", time=0.0)


def lifted_forward(gen: GkslGenerator) -> GkslGenerator:
    """Generator acting on the second factor: 1 (x) H, jumps 1 (x) L."""
    eye = np.eye(gen.dim, dtype=complex)
    return GkslGenerator(np.kron(eye, gen.H), [np.kron(eye, L) for L in gen.jumps])


def lifted_backward(gen: GkslGenerator) -> GkslGenerator:
    """Generator acting on the first factor: H (x) 1, jumps L (x) 1."""
    eye = np.eye(gen.dim, dtype=complex)
    return GkslGenerator(np.kron(gen.H, eye), [np.kron(L, eye) for L in gen.jumps])


class TwoPointEvolution:
    """Forward/backward two-point densities of one (gen, rho) pair, with cached lifted superoperators."""

    def __init__(self, gen: GkslGenerator, rho, tol: Optional[float] = None):
        tol = verdict_tol_or_default(tol)
        self.gen = gen
        self.rho = as_state(rho)
        if not is_invariant(gen, self.rho, tol):
            logger.warning("⚠️ State is not invariant for the generator; two-point densities "
                           "are computed anyway")
        self.r = build_r(self.rho, tol)
        self.D = build_D(self.r)
        self.forward_generator = lifted_forward(gen)
        self.backward_generator = lifted_backward(gen)
        self._forward = superoperator(self.forward_generator, SuperoperatorKind.SCHRODINGER)
        self._backward = superoperator(self.backward_generator, SuperoperatorKind.SCHRODINGER)

    def forward(self, t: float) -> TwoPointDensity:
        state = evolve(self.forward_generator, self.D.mat, t, superop=self._forward)
        return TwoPointDensity(state.mat, tag="forward", time=t)

    def backward(self, t: float) -> TwoPointDensity:
        state = evolve(self.backward_generator, self.D.mat, t, superop=self._backward)
        return TwoPointDensity(state.mat, tag="backward", time=t)

    def pair(self, t: float) -> Tuple[TwoPointDensity, TwoPointDensity]:
        return self.forward(t), self.backward(t)


def forward_density(gen: GkslGenerator, rho, t: float) -> TwoPointDensity:
    return TwoPointEvolution(gen, rho).forward(t)


def backward_density(gen: GkslGenerator, rho, t: float) -> TwoPointDensity:
    return TwoPointEvolution(gen, rho).backward(t)


def _phi(jumps, D: np.ndarray) -> np.ndarray:
    out = np.zeros_like(D)
    for J in jumps:
        out += J @ D @ J.conj().T
    return out


def phi_forward(gen: GkslGenerator, rho) -> TwoPointDensity:
    rho = as_state(rho)
    require_special(gen, rho)
    D = build_D(build_r(rho)).mat
    return TwoPointDensity(_phi(lifted_forward(gen).jumps, D), tag="phi_forward")


def phi_backward(gen: GkslGenerator, rho) -> TwoPointDensity:
    rho = as_state(rho)
    require_special(gen, rho)
    D = build_D(build_r(rho)).mat
    return TwoPointDensity(_phi(lifted_backward(gen).jumps, D), tag="phi_backward")


def derivative_symmetry_check(gen: GkslGenerator, rho, tol: Optional[float] = None) -> Tuple[bool, float]:
    """
    Compares the time derivatives at zero of the forward and backward
    densities. When they agree the full evolutions must agree too, which is
    spot-checked at t = 0.1 and t = 1.
    """
    tol = verdict_tol_or_default(tol)
    rho = as_state(rho)
    D = build_D(build_r(rho, tol)).mat
    forward = apply_Lstar(lifted_forward(gen), D)
    backward = apply_Lstar(lifted_backward(gen), D)
    residual = opnorm(forward - backward)
    holds = residual <= tol * gen.rate_scale
    if holds:
        evolution = TwoPointEvolution(gen, rho, tol)
        for t in (0.1, 1.0):
            fwd, bwd = evolution.pair(t)
            gap = opnorm(fwd.mat - bwd.mat)
            if gap > 1e-9:
                raise NumericalInconsistencyError(f"Derivatives agree but evolved densities differ by "
                                                  f"{gap:.3e} at t={t}")
    return holds, residual


def flip_residuals(gen: GkslGenerator, rho, times=(0.1, 1.0)) -> Dict[float, float]:
    """||F D_fwd(t) F - D_bwd(t)|| for each t."""
    evolution = TwoPointEvolution(gen, rho)
    F = flip(gen.dim)
    residuals = {}
    for t in times:
        fwd, bwd = evolution.pair(t)
        residuals[t] = opnorm(F @ fwd.mat @ F - bwd.mat)
    return residuals
