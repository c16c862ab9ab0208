import numpy as np
import pytest

from qmsep.services.gksl import DensityMatrix, GkslGenerator, build_generator, invariant_states, make_special
from qmsep.services.models import (
    CycleSpec,
    GenericSpec,
    cycle_model,
    generic_invariant_state,
    generic_model,
    two_level_model,
)


@pytest.fixture
def rng():
    return np.random.default_rng(20241018)


@pytest.fixture
def random_matrix(rng):
    def factory(n: int) -> np.ndarray:
        return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return factory


@pytest.fixture
def random_density(rng):
    """Faithful state with complex entries."""
    def factory(n: int) -> DensityMatrix:
        A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        rho = A @ A.conj().T + 0.1 * np.eye(n)
        return DensityMatrix(rho / np.trace(rho).real)
    return factory


@pytest.fixture
def random_real_density(rng):
    def factory(n: int) -> DensityMatrix:
        A = rng.normal(size=(n, n))
        rho = A @ A.T + 0.1 * np.eye(n)
        return DensityMatrix(rho / np.trace(rho))
    return factory


@pytest.fixture
def random_generator(rng):
    """Generic complex GKSL generator (no special form)."""
    def factory(n: int, d: int) -> GkslGenerator:
        A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        jumps = [rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) for _ in range(d)]
        return build_generator((A + A.conj().T) / 2, jumps)
    return factory


@pytest.fixture
def random_real_model(rng):
    """
    Special-form model whose invariant state has real entries: real jumps and
    i times a real antisymmetric Hamiltonian keep L_* commuting with entrywise
    conjugation.
    """
    def factory(n: int, d: int, scale: float = 1.0):
        A = rng.normal(size=(n, n))
        H = 1j * scale * (A - A.T) / 2
        jumps = [rng.normal(size=(n, n)) for _ in range(d)]
        gen = build_generator(H, jumps)
        rho = invariant_states(gen)[0]
        assert rho.is_faithful
        return make_special(gen, rho), rho
    return factory


@pytest.fixture
def cycle():
    def factory(n: int = 3, lam: float = 2.0, mu: float = 1.0, h_diag=None):
        return cycle_model(CycleSpec(n=n, lam=lam, mu=mu, h_diag=h_diag))
    return factory


@pytest.fixture
def two_level():
    return two_level_model(1.0)


@pytest.fixture
def one_way_gamma():
    # irreducible 3-state chain; 0 -> 1 has no reverse rate
    return [[0.0, 1.0, 1.0],
            [0.0, 0.0, 1.0],
            [1.0, 1.0, 0.0]]


@pytest.fixture
def balanced_chain(rng):
    """Classical chain with rho_l gamma_lm = rho_m gamma_ml and no Hamiltonian."""
    def factory(n: int):
        p = rng.uniform(0.5, 1.5, size=n)
        p /= p.sum()
        weights = rng.uniform(0.2, 2.0, size=(n, n))
        gamma = (weights + weights.T) / p[:, None]
        np.fill_diagonal(gamma, 0.0)
        spec = GenericSpec(n=n, gamma=gamma.tolist())
        rho = generic_invariant_state(spec)
        return make_special(generic_model(spec), rho), rho
    return factory
