import math

import numpy as np
import pytest
from scipy.stats import unitary_group

from qmsep.services.balance import (
    balance_report,
    derivation_gap,
    g_condition_residual,
    sqdb_check,
    sqdb_theta_check,
    theta_superoperator,
    verify_witness,
)
from qmsep.services.entropy import entropy_production
from qmsep.services.gksl import DensityMatrix, GkslGenerator, build_generator, make_special
from qmsep.services.matops import vectorize
from qmsep.services.models import GenericSpec, generic_invariant_state, generic_model, two_level_model

SWAP = np.array([[0, 1], [1, 0]])


def test_two_level_satisfies_plain_detailed_balance(two_level):
    report = sqdb_check(*two_level)
    assert report.sqdb_holds
    assert np.allclose(report.u, SWAP)
    assert report.residual_jump < 1e-12


@pytest.mark.parametrize("kappa", [0.5, 1.0, -2.0])
def test_two_level_breaks_time_reversed_balance_through_drift(kappa):
    gen, rho = two_level_model(kappa)
    report = sqdb_theta_check(gen, rho)
    assert not report.sqdb_theta_holds
    assert np.allclose(report.u_theta, SWAP)
    assert report.residual_selfadjoint < 1e-12
    assert report.g_condition_residual == pytest.approx(math.sqrt(2) * abs(kappa), rel=1e-10)
    assert g_condition_residual(gen, rho) == pytest.approx(report.g_condition_residual)


def test_two_level_derivation_gap_is_hamiltonian(two_level):
    gen, rho = two_level
    K, residual, commutator = derivation_gap(gen, rho)
    assert residual < 1e-10
    assert commutator < 1e-10
    assert np.allclose(K, K.conj().T)
    assert abs(np.trace(K)) < 1e-12
    assert np.linalg.norm(K) > 0.1


@pytest.mark.parametrize("lam,mu", [(2.0, 1.0), (1.0, 1.0), (0.5, 4.0)])
def test_cycle_witness(cycle, lam, mu):
    gen, rho = cycle(n=3, lam=lam, mu=mu)
    report = sqdb_check(gen, rho)
    expected = np.array([[0, math.sqrt(lam / mu)], [math.sqrt(mu / lam), 0]])
    assert np.allclose(report.u, expected)
    assert report.sqdb_holds == (lam == mu)


def test_symmetric_cycle_satisfies_time_reversed_balance(cycle):
    report = sqdb_theta_check(*cycle(n=4, lam=1.5, mu=1.5, h_diag=[0.0, 1.0, -0.5, 2.0]))
    assert report.sqdb_theta_holds
    assert report.g_condition_residual < 1e-12


def test_driven_cycle_fails_time_reversed_balance(cycle):
    report = sqdb_theta_check(*cycle(n=3, lam=2.0, mu=1.0))
    assert not report.sqdb_theta_holds
    assert report.residual_unitary_theta > 0.1


def test_classical_detailed_balance_chain():
    spec = GenericSpec(n=2, gamma=[[0, 1], [2, 0]])
    rho = generic_invariant_state(spec)
    gen = generic_model(spec)
    assert sqdb_check(gen, rho).sqdb_holds
    assert sqdb_theta_check(gen, rho).sqdb_theta_holds
    K, residual, _ = derivation_gap(gen, rho)
    assert residual < 1e-10
    assert np.linalg.norm(K) < 1e-10


def test_verify_witness(two_level):
    gen, rho = two_level
    assert verify_witness(gen, rho, SWAP) < 1e-12
    assert verify_witness(gen, rho, np.eye(2)) > 0.1
    with pytest.raises(ValueError, match="Witness"):
        verify_witness(gen, rho, np.eye(3))


def test_theta_superoperator_transposes(random_matrix):
    A = random_matrix(3)
    assert np.allclose(theta_superoperator(3) @ vectorize(A), vectorize(A.T))


def test_random_model_reports_derivation_residual(random_real_model):
    gen, rho = random_real_model(2, 3)
    K, residual, commutator = derivation_gap(gen, rho)
    assert np.isfinite(residual) and residual >= 0
    assert np.allclose(K, K.conj().T)
    assert np.isfinite(commutator)


def test_balance_report_combines_checks(two_level):
    report = balance_report(*two_level)
    assert report.sqdb_holds is True
    assert report.sqdb_theta_holds is False
    assert report.g_theta_invariant is False
    assert report.g_commutes_with_rho is True
    assert report.derivation_residual < 1e-10
    assert report.K.shape == (2, 2)


def test_checks_need_faithful_state_and_jumps(two_level):
    gen, _ = two_level
    with pytest.raises(ValueError, match="faithful"):
        sqdb_check(gen, DensityMatrix(np.diag([1.0, 0.0])))
    with pytest.raises(ValueError, match="jump"):
        sqdb_check(GkslGenerator(np.diag([1.0, -1.0]), []), DensityMatrix(np.eye(2) / 2))


@pytest.mark.parametrize("n", [3, 4])
def test_balanced_chains_satisfy_both_conditions(balanced_chain, n):
    for _ in range(3):
        gen, rho = balanced_chain(n)
        assert entropy_production(gen, rho).value == pytest.approx(0.0, abs=1e-10)
        report = balance_report(gen, rho)
        assert report.sqdb_holds
        assert report.sqdb_theta_holds


def test_balance_verdicts_bound_entropy_production(rng, cycle, balanced_chain, random_real_model):
    models = [cycle(n=3, lam=2.0, mu=1.0), cycle(n=4, lam=1.0, mu=1.0, h_diag=[0.0, 0.3, -1.0, 2.0]),
              two_level_model(0.5), two_level_model(3.0), balanced_chain(3), balanced_chain(4)]
    for n in (3, 4):
        gamma = rng.uniform(0.1, 2.0, size=(n, n))
        np.fill_diagonal(gamma, 0.0)
        spec = GenericSpec(n=n, gamma=gamma.tolist())
        rho = generic_invariant_state(spec)
        models.append((make_special(generic_model(spec), rho), rho))
    models += [random_real_model(2, 3), random_real_model(3, 2)]
    for gen, rho in models:
        ep = entropy_production(gen, rho).value
        report = balance_report(gen, rho)
        if report.sqdb_theta_holds:
            assert ep <= 1e-10
        if ep <= 1e-10:
            assert report.sqdb_holds


def test_verdicts_survive_unitary_remixing_of_jumps(cycle, balanced_chain):
    w = unitary_group.rvs(2, random_state=7)
    models = [cycle(n=3, lam=2.0, mu=1.0), two_level_model(1.0), balanced_chain(2)]
    for gen, rho in models:
        d = gen.num_jumps
        assert d == 2
        mixed = build_generator(gen.H, [sum(w[k, j] * gen.jumps[j] for j in range(d)) for k in range(d)])
        before, after = balance_report(gen, rho), balance_report(mixed, rho)
        assert after.sqdb_holds == before.sqdb_holds
        assert after.sqdb_theta_holds == before.sqdb_theta_holds
        if after.sqdb_holds:
            assert verify_witness(mixed, rho, after.u) < 1e-10
        if after.sqdb_theta_holds:
            assert verify_witness(mixed, rho, after.u_theta, theta=True) < 1e-10
