# qmsep/services/gksl.py - GKSL generators, states and their evolution
import logging
from enum import Enum
from functools import cached_property
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg

from qmsep.config import rel_tol_or_default, verdict_tol_or_default
from qmsep.services.errors import NumericalInconsistencyError
from qmsep.services.matops import (
    HermitianEig,
    as_square,
    devectorize,
    expm,
    hermitian_eig,
    matrix_unit,
    opnorm,
    power_on_support,
    span_basis,
    support_projection,
    vectorize,
)

logger = logging.getLogger(__name__)


class DensityMatrix:
    """Validated state: Hermitian, positive semidefinite and trace one (within tol)."""

    def __init__(self, mat, tol: Optional[float] = None, rel_tol: Optional[float] = None):
        tol = verdict_tol_or_default(tol)
        self.rel_tol = rel_tol_or_default(rel_tol)
        mat = as_square(mat)
        eig = hermitian_eig(mat, tol)
        trace = float(np.sum(eig.eigenvalues))
        if abs(trace - 1.0) > tol:
            raise ValueError(f"Density matrix must have unit trace, got {trace:.12g}")
        if eig.eigenvalues[0] < -tol:
            raise ValueError(f"Density matrix has a negative eigenvalue {eig.eigenvalues[0]:.3e}")
        self.mat = (mat + mat.conj().T) / 2
        self.eig: HermitianEig = eig

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eig.eigenvalues

    @property
    def is_faithful(self) -> bool:
        return bool(self.eig.eigenvalues[0] > self.rel_tol)

    @cached_property
    def support(self) -> np.ndarray:
        return support_projection(self.mat, self.rel_tol)

    @cached_property
    def sqrt(self) -> np.ndarray:
        return power_on_support(self.mat, 0.5, self.rel_tol)

    @cached_property
    def inv_sqrt(self) -> np.ndarray:
        if not self.is_faithful:
            raise ValueError("rho^(-1/2) requested for a state that is not faithful")
        return power_on_support(self.mat, -0.5, self.rel_tol)

    def distance(self, other: "DensityMatrix") -> float:
        return opnorm(self.mat - other.mat)

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim}, faithful={self.is_faithful})"


def as_state(x, tol: Optional[float] = None) -> DensityMatrix:
    return x if isinstance(x, DensityMatrix) else DensityMatrix(x, tol)


class SuperoperatorKind(str, Enum):
    HEISENBERG = "heisenberg"
    SCHRODINGER = "schrodinger"


class Superoperator:
    """n^2 x n^2 matrix acting on column-stacked operators."""

    def __init__(self, n: int, mat: np.ndarray, kind: SuperoperatorKind):
        self.n = n
        self.mat = mat
        self.kind = kind

    def apply(self, x) -> np.ndarray:
        return devectorize(self.mat @ vectorize(x), self.n)

    def propagator(self, t: float) -> np.ndarray:
        return expm(t * self.mat)


class GkslGenerator:
    """
    Generator in GKSL form, L(x) = G* x + sum_l L_l* x L_l + x G,
    with drift G = -1/2 sum_l L_l* L_l - iH.
    ``is_special_for`` is the state the representation was normalised against.
    """

    def __init__(self, H, jumps: Sequence, is_special_for: Optional[DensityMatrix] = None):
        H = as_square(H)
        n = H.shape[0]
        jumps = [as_square(L) for L in jumps]
        for idx, L in enumerate(jumps):
            if L.shape != (n, n):
                raise ValueError(f"Jump {idx} has shape {L.shape}, expected {(n, n)}")
        self.H = (H + H.conj().T) / 2
        self.jumps: List[np.ndarray] = jumps
        self.is_special_for = is_special_for
        dissipation = sum((L.conj().T @ L for L in jumps), np.zeros((n, n), dtype=complex))
        self.G = -0.5 * dissipation - 1j * self.H

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def num_jumps(self) -> int:
        return len(self.jumps)

    @property
    def rate_scale(self) -> float:
        """Scale used to turn verdict tolerances into absolute thresholds."""
        return max(1.0, opnorm(self.G))

    def __repr__(self) -> str:
        return f"GkslGenerator(dim={self.dim}, jumps={self.num_jumps}, special={self.is_special_for is not None})"


def build_generator(H, jumps: Sequence, tol: Optional[float] = None) -> GkslGenerator:
    tol = verdict_tol_or_default(tol)
    H = as_square(H)
    if H.shape[0] < 2:
        raise ValueError(f"Hilbert space dimension must be at least 2, got {H.shape[0]}")
    if len(jumps) == 0:
        raise ValueError("At least one jump operator is required")
    asymmetry = opnorm(H - H.conj().T)
    if asymmetry > tol * max(opnorm(H), 1.0):
        raise ValueError(f"Hamiltonian is not Hermitian: ||H - H*|| = {asymmetry:.3e}")
    return GkslGenerator(H, jumps)


def _check_operand(gen: GkslGenerator, x) -> np.ndarray:
    x = as_square(x)
    if x.shape != (gen.dim, gen.dim):
        raise ValueError(f"Operand has shape {x.shape}, generator acts on {gen.dim}x{gen.dim}")
    return x


def apply_L(gen: GkslGenerator, x) -> np.ndarray:
    x = _check_operand(gen, x)
    G = gen.G
    out = G.conj().T @ x + x @ G
    for L in gen.jumps:
        out = out + L.conj().T @ x @ L
    return out


def apply_Lstar(gen: GkslGenerator, sigma) -> np.ndarray:
    sigma = _check_operand(gen, sigma)
    G = gen.G
    out = G @ sigma + sigma @ G.conj().T
    for L in gen.jumps:
        out = out + L @ sigma @ L.conj().T
    return out


def superoperator(gen: GkslGenerator, kind: SuperoperatorKind) -> Superoperator:
    n = gen.dim
    eye = np.eye(n, dtype=complex)
    G = gen.G
    if SuperoperatorKind(kind) is SuperoperatorKind.HEISENBERG:
        mat = np.kron(eye, G.conj().T) + np.kron(G.T, eye)
        for L in gen.jumps:
            mat = mat + np.kron(L.T, L.conj().T)
    else:
        mat = np.kron(eye, G) + np.kron(G.conj(), eye)
        for L in gen.jumps:
            mat = mat + np.kron(L.conj(), L)
    return Superoperator(n, mat, SuperoperatorKind(kind))


def lindblad_residual(gen: GkslGenerator, rho) -> float:
    """||L_*(rho)||, zero exactly for invariant states."""
    rho = as_state(rho)
    return opnorm(apply_Lstar(gen, rho.mat))


def is_invariant(gen: GkslGenerator, rho, tol: Optional[float] = None) -> bool:
    tol = verdict_tol_or_default(tol)
    return lindblad_residual(gen, rho) <= tol * gen.rate_scale


def is_special(gen: GkslGenerator, rho, tol: Optional[float] = None,
               rel_tol: Optional[float] = None) -> bool:
    tol = verdict_tol_or_default(tol)
    rho = as_state(rho)
    for L in gen.jumps:
        if abs(np.trace(rho.mat @ L)) > tol * max(1.0, opnorm(L)):
            return False
    if not gen.jumps:
        return True
    family = [np.eye(gen.dim, dtype=complex)] + list(gen.jumps)
    return span_basis(family, rel_tol).dim == len(family)


def require_special(gen: GkslGenerator, rho, tol: Optional[float] = None) -> None:
    tol = verdict_tol_or_default(tol)
    rho = as_state(rho)
    if gen.is_special_for is not None and gen.is_special_for.distance(rho) <= tol:
        return
    if not is_special(gen, rho, tol):
        raise ValueError("Generator is not in special form for this state (tr(rho L) != 0 or "
                         "jumps dependent on the identity); call make_special first")


def make_special(gen: GkslGenerator, rho, rel_tol: Optional[float] = None) -> GkslGenerator:
    """
    Shift jumps to tr(rho L) = 0 and absorb the shift into H so the generator is
    unchanged. Dependent jump families are replaced by the independent family
    read off the SVD of the stacked jump vectors, which keeps sum L (.) L* and
    sum L* L intact.
    """
    rel_tol = rel_tol_or_default(rel_tol)
    rho = as_state(rho)
    if rho.dim != gen.dim:
        raise ValueError(f"State dimension {rho.dim} does not match generator dimension {gen.dim}")
    if not rho.is_faithful:
        raise ValueError("make_special requires a faithful state")

    n = gen.dim
    eye = np.eye(n, dtype=complex)
    shifted = []
    H = gen.H.copy()
    for L in gen.jumps:
        c = complex(np.trace(rho.mat @ L))
        L_shifted = L - c * eye
        H = H + 0.5j * (np.conj(c) * L_shifted - c * L_shifted.conj().T)
        shifted.append(L_shifted)

    jumps = shifted
    if shifted:
        stacked = np.column_stack([vectorize(L) for L in shifted])
        U, s, _ = scipy.linalg.svd(stacked, full_matrices=False)
        rank = int(np.count_nonzero(s > rel_tol * s[0])) if s[0] > 0 else 0
        if rank < len(shifted):
            logger.warning(f"⚠️ Jump operators are linearly dependent ({len(shifted)} given, rank {rank}); "
                           f"re-expressing them as an independent family")
            jumps = [devectorize(U[:, k] * s[k], n) for k in range(rank)]
    return GkslGenerator(H, jumps, is_special_for=rho)


def _kernel(mat: np.ndarray, tol: float):
    U, s, Vh = scipy.linalg.svd(mat)
    cutoff = tol * max(float(s[0]), np.finfo(float).tiny)
    null = s <= cutoff
    return U[:, null], Vh.conj().T[:, null]


def kernel_dimension(gen: GkslGenerator, tol: Optional[float] = None) -> int:
    tol = rel_tol_or_default(tol)
    _, right = _kernel(superoperator(gen, SuperoperatorKind.SCHRODINGER).mat, tol)
    return right.shape[1]


def _ergodic_candidate(left: np.ndarray, right: np.ndarray, n: int) -> Optional[np.ndarray]:
    """Spectral projection of 1/n onto the kernel (along the range)."""
    try:
        coeffs = np.linalg.solve(left.conj().T @ right, left.conj().T @ vectorize(np.eye(n) / n))
    except np.linalg.LinAlgError:
        return None
    X = devectorize(right @ coeffs, n)
    X = (X + X.conj().T) / 2
    trace = float(np.real(np.trace(X)))
    return X / trace if trace > 0 else None


def _as_candidate(X: np.ndarray, tol: float) -> Optional[DensityMatrix]:
    trace = float(np.real(np.trace(X)))
    if trace <= tol:
        return None
    X = X / trace
    if scipy.linalg.eigvalsh((X + X.conj().T) / 2)[0] < -tol:
        return None
    return DensityMatrix(X, tol)


def invariant_states(gen: GkslGenerator, tol: Optional[float] = None) -> List[DensityMatrix]:
    rel_tol = rel_tol_or_default(tol)
    state_tol = verdict_tol_or_default(None)
    n = gen.dim
    left, right = _kernel(superoperator(gen, SuperoperatorKind.SCHRODINGER).mat, rel_tol)
    if right.shape[1] == 0:
        raise NumericalInconsistencyError("Kernel of L_* is empty; trace preservation guarantees "
                                          "at least one invariant state")

    raw = []
    ergodic = _ergodic_candidate(left, right, n)
    if ergodic is not None:
        raw.append(ergodic)
    for k in range(right.shape[1]):
        X = devectorize(right[:, k], n)
        for part in ((X + X.conj().T) / 2, (X - X.conj().T) / 2j):
            if opnorm(part) <= rel_tol:
                continue
            raw.extend([part, -part])

    states: List[DensityMatrix] = []
    for X in raw:
        candidate = _as_candidate(X, state_tol)
        if candidate is None:
            continue
        if any(candidate.distance(s) <= state_tol for s in states):
            continue
        states.append(candidate)

    if right.shape[1] > 1:
        logger.warning(f"⚠️ Kernel of L_* has dimension {right.shape[1]}; "
                       f"returning {len(states)} candidate invariant states")
    return states


def evolve(gen: GkslGenerator, sigma0, t: float,
           superop: Optional[Superoperator] = None) -> DensityMatrix:
    if t < 0:
        raise ValueError(f"Evolution time must be non-negative, got {t}")
    sigma0 = as_state(sigma0)
    if superop is None:
        superop = superoperator(gen, SuperoperatorKind.SCHRODINGER)
    evolved = devectorize(superop.propagator(t) @ vectorize(sigma0.mat), gen.dim)
    return DensityMatrix(evolved)


def choi_matrix(gen: GkslGenerator, t: float) -> np.ndarray:
    """sum_jk |j><k| (x) T_*t(|j><k|)."""
    if t < 0:
        raise ValueError(f"Evolution time must be non-negative, got {t}")
    n = gen.dim
    propagator = superoperator(gen, SuperoperatorKind.SCHRODINGER).propagator(t)
    choi = np.zeros((n * n, n * n), dtype=complex)
    for j in range(n):
        for k in range(n):
            E = matrix_unit(n, j, k)
            choi += np.kron(E, devectorize(propagator @ vectorize(E), n))
    return choi


def kms_duality_residual(gen: GkslGenerator, dual: GkslGenerator, rho, t: float = 0.3,
                         seed: int = 0) -> float:
    rho = as_state(rho)
    rng = np.random.default_rng(seed)
    n = gen.dim
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    b = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    forward = superoperator(gen, SuperoperatorKind.HEISENBERG)
    backward = superoperator(dual, SuperoperatorKind.HEISENBERG)
    Tb = devectorize(forward.propagator(t) @ vectorize(b), n)
    Ta = devectorize(backward.propagator(t) @ vectorize(a), n)
    s = rho.sqrt
    lhs = np.trace(s @ a @ s @ Tb)
    rhs = np.trace(s @ Ta @ s @ b)
    return float(abs(lhs - rhs) / max(1.0, abs(lhs)))


def kms_dual(gen: GkslGenerator, rho, tol: Optional[float] = None) -> GkslGenerator:
    """KMS-dual generator: G' = rho^1/2 G* rho^-1/2, L'_l = rho^1/2 L_l* rho^-1/2."""
    tol = verdict_tol_or_default(tol)
    rho = as_state(rho)
    if not rho.is_faithful:
        raise ValueError("KMS dual requires a faithful state")
    require_special(gen, rho, tol)
    s, s_inv = rho.sqrt, rho.inv_sqrt
    jumps = [s @ L.conj().T @ s_inv for L in gen.jumps]
    G_dual = s @ gen.G.conj().T @ s_inv
    dissipation = sum((L.conj().T @ L for L in jumps), np.zeros_like(G_dual))
    H_dual = 1j * (G_dual + 0.5 * dissipation)
    skew = opnorm(H_dual - H_dual.conj().T)
    if skew > tol * gen.rate_scale:
        raise ValueError(f"KMS dual is not of GKSL form (anti-Hermitian part {skew:.3e}); "
                         f"is rho invariant?")
    dual = GkslGenerator(H_dual, jumps, is_special_for=rho)
    residual = kms_duality_residual(gen, dual, rho)
    if residual > tol * gen.rate_scale:
        raise NumericalInconsistencyError(f"KMS duality check failed: residual {residual:.3e}")
    return dual
