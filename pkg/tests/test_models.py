import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.stats import ortho_group

from qmsep.services.gksl import DensityMatrix, lindblad_residual
from qmsep.services.models import (
    CycleSpec,
    GenericSpec,
    classical_ep,
    classical_generator,
    generic_invariant_state,
    generic_model,
    real_eigenspace_basis,
    shift_matrix,
    theta_eigenbasis,
    two_level_model,
)


def test_spec_validation():
    with pytest.raises(ValidationError):
        CycleSpec(n=2, lam=1, mu=1)
    with pytest.raises(ValidationError):
        CycleSpec(n=3, lam=0, mu=1)
    with pytest.raises(ValidationError):
        CycleSpec(n=3, lam=1, mu=1, h_diag=[0.0])
    with pytest.raises(ValidationError):
        GenericSpec(n=2, gamma=[[1, 1], [1, 0]])
    with pytest.raises(ValidationError):
        GenericSpec(n=2, gamma=[[0, -1], [1, 0]])
    assert CycleSpec(n=4, lam=1, mu=2).h_diag == [0.0] * 4


def test_shift_matrix_moves_basis_vectors_forward():
    S = shift_matrix(4)
    e = np.eye(4)
    for j in range(4):
        assert np.allclose(S @ e[j], e[(j + 1) % 4])


def test_cycle_model_invariant_and_traceless(cycle):
    gen, rho = cycle(n=5, lam=2.0, mu=0.5, h_diag=[0.3, -0.1, 0.7, 0.0, 1.2])
    assert np.allclose(rho.mat, np.eye(5) / 5)
    assert lindblad_residual(gen, rho) < 1e-12
    assert all(abs(np.trace(L)) < 1e-14 for L in gen.jumps)
    assert gen.is_special_for is rho


def test_generic_model_jump_layout():
    spec = GenericSpec(n=2, gamma=[[0, 1], [2, 0]])
    gen = generic_model(spec)
    assert gen.num_jumps == 2
    assert np.allclose(gen.jumps[0], np.array([[0, 0], [1, 0]]))
    assert np.allclose(gen.jumps[1], np.array([[0, math.sqrt(2)], [0, 0]]))
    assert np.allclose(gen.G, np.diag(np.diag(gen.G)))


def test_generic_model_needs_a_rate():
    with pytest.raises(ValueError, match="positive rate"):
        generic_model(GenericSpec(n=2, gamma=[[0, 0], [0, 0]]))


def test_two_state_chain_invariant_state():
    spec = GenericSpec(n=2, gamma=[[0, 1], [2, 0]])
    rho = generic_invariant_state(spec)
    assert np.allclose(rho.mat, np.diag([2 / 3, 1 / 3]))
    assert lindblad_residual(generic_model(spec), rho) < 1e-12
    assert classical_ep(spec.gamma, np.diag(rho.mat).real) == pytest.approx(0.0, abs=1e-14)


def test_classical_generator_rows_sum_to_zero():
    Q = classical_generator([[0, 1, 2], [3, 0, 1], [1, 1, 0]])
    assert np.allclose(Q.sum(axis=1), 0)
    assert Q[0, 2] == 2


def test_reducible_chain_mixes_closed_classes():
    # states 0,1 form a closed class, state 2 drains into it, state 3 is absorbing
    gamma = [[0, 1, 0, 0],
             [1, 0, 0, 0],
             [1, 0, 0, 1],
             [0, 0, 0, 0]]
    spec = GenericSpec(n=4, gamma=gamma)
    rho = generic_invariant_state(spec)
    assert not rho.is_faithful
    assert np.allclose(np.diag(rho.mat).real, [0.25, 0.25, 0.0, 0.5])
    assert lindblad_residual(generic_model(spec), rho) < 1e-12
    with pytest.raises(ValueError, match="weights"):
        generic_invariant_state(spec, weights=[1.0])


def test_classical_ep_values(one_way_gamma):
    cycle_rates = [[0, 2, 1], [1, 0, 2], [2, 1, 0]]
    assert classical_ep(cycle_rates, [1 / 3] * 3) == pytest.approx(math.log(2), abs=1e-12)
    assert classical_ep(one_way_gamma, [0.2, 0.3, 0.5]) == math.inf
    with pytest.raises(ValueError, match="probability"):
        classical_ep(cycle_rates, [0.5, 0.5, 0.5])


def test_two_level_model_structure():
    gen, rho = two_level_model(0.5)
    assert np.allclose(gen.H, np.array([[0, -0.5j], [0.5j, 0]]))
    assert lindblad_residual(gen, rho) < 1e-14
    with pytest.raises(ValueError, match="non-zero"):
        two_level_model(0.0)


def test_theta_eigenbasis_of_diagonal_state_is_computational():
    basis = theta_eigenbasis(DensityMatrix(np.diag([0.5, 0.3, 0.2])))
    assert np.allclose(np.column_stack(basis), np.eye(3))


def test_real_basis_from_complex_eigenvectors():
    E = np.column_stack([np.array([1, 1j]) / math.sqrt(2), np.array([1, -1j]) / math.sqrt(2)])
    basis = real_eigenspace_basis(E)
    F = np.column_stack(basis)
    assert np.allclose(F.imag, 0)
    assert np.allclose(F.conj().T @ F, np.eye(2))


@pytest.mark.parametrize("spectrum", [None, [0.3, 0.3, 0.2, 0.2], [0.4, 0.2, 0.2, 0.2]])
def test_theta_eigenbasis_is_real_and_diagonalises(rng, spectrum):
    for seed in range(4):
        O = ortho_group.rvs(4, random_state=seed)
        values = rng.dirichlet(np.ones(4)) if spectrum is None else np.array(spectrum)
        rho = DensityMatrix(O @ np.diag(values) @ O.T)
        basis = theta_eigenbasis(rho)
        assert max(np.linalg.norm(f.conj() - f) for f in basis) < 1e-12
        F = np.column_stack(basis)
        assert np.allclose(F.T @ F, np.eye(4), atol=1e-12)
        weights = [np.real(f @ rho.mat @ f) for f in basis]
        rebuilt = sum(w * np.outer(f, f) for w, f in zip(weights, basis))
        assert np.max(np.abs(rebuilt - rho.mat)) < 1e-10


def test_theta_eigenbasis_rejects_complex_state(random_density):
    with pytest.raises(ValueError, match="not real"):
        theta_eigenbasis(random_density(3))
