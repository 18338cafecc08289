import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_ensemble
from covprep.dataset import MixedStateEnsemble, PureStateEnsemble, outer_product_map, symmetrize
from covprep.moments import (covariance_matrix, decomposition_identity_residual, ensemble_density, mean_direction,
                             mean_outer, mean_vector, moments, second_moment_matrix)
from covprep.numkernel import hermitian_eigendecompose

KET0 = np.array([1.0, 0.0])
KET1 = np.array([0.0, 1.0])


def brute_force_covariance(ens):
    d = ens.dim
    mu = [sum(p * y[j] for p, y in zip(ens.probs, ens.states)) for j in range(d)]
    q = np.zeros((d, d), dtype=complex)
    for j in range(d):
        for k in range(d):
            q[j, k] = sum(p * (y[j] - mu[j]) * np.conj(y[k] - mu[k]) for p, y in zip(ens.probs, ens.states))
    return q


class TestMean:
    def test_uniform(self):
        ens = PureStateEnsemble(np.array([KET0, KET1]), [0.5, 0.5])
        np.testing.assert_allclose(mean_vector(ens), [0.5, 0.5])

    def test_weighted(self):
        ens = PureStateEnsemble(np.array([KET0, KET1]), [0.25, 0.75])
        np.testing.assert_allclose(mean_vector(ens), [0.25, 0.75])

    def test_symmetrized_is_zero(self):
        ens = symmetrize(random_ensemble(np.random.default_rng(0), 7, 5))
        assert np.max(np.abs(mean_vector(ens))) <= 1e-14


class TestCovariance:
    def test_single_point(self):
        psi = np.array([0.6, 0.8j])
        np.testing.assert_allclose(covariance_matrix(PureStateEnsemble(psi[None], [1.0])), 0, atol=1e-16)

    def test_plus_minus_pair(self):
        psi = np.array([0.6, 0.8j])
        ens = PureStateEnsemble(np.array([psi, -psi]), [0.5, 0.5])
        np.testing.assert_allclose(covariance_matrix(ens), np.outer(psi, psi.conj()), atol=1e-16)

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            ens = random_ensemble(rng, int(rng.integers(1, 30)), int(rng.integers(1, 7)))
            np.testing.assert_allclose(covariance_matrix(ens), brute_force_covariance(ens), atol=1e-14, rtol=0)

    def test_compensated_path_matches(self):
        rng = np.random.default_rng(2)
        ens = random_ensemble(rng, 12_000, 4)
        direct = (ens.states.T * ens.probs) @ ens.states.conj()
        assert np.linalg.norm(second_moment_matrix(ens) - direct) <= 1e-14
        assert np.linalg.norm(ensemble_density(ens) - covariance_matrix(ens) - mean_outer(mean_vector(ens))) <= 4e-13


class TestSecondMoments:
    def test_basis_state(self):
        np.testing.assert_array_equal(second_moment_matrix(PureStateEnsemble(KET0[None], [1.0])), np.diag([1.0, 0.0]))

    def test_centered_equals_covariance(self):
        ens = symmetrize(random_ensemble(np.random.default_rng(3), 9, 4))
        assert np.linalg.norm(second_moment_matrix(ens) - covariance_matrix(ens)) <= 1e-14

    def test_equals_q_plus_m(self):
        ens = random_ensemble(np.random.default_rng(4), 20, 6, offset=0.5)
        t = second_moment_matrix(ens)
        assert np.linalg.norm(t - covariance_matrix(ens) - mean_outer(mean_vector(ens))) <= 1e-14
        np.testing.assert_allclose(t, ensemble_density(ens), atol=1e-12)


class TestMeanOuter:
    def test_zero(self):
        np.testing.assert_array_equal(mean_outer(np.zeros(3)), np.zeros((3, 3)))
        assert mean_direction(np.zeros(3)) == (0.0, None)

    def test_basis(self):
        m = mean_outer([1.0, 0.0])
        np.testing.assert_array_equal(m, np.diag([1.0, 0.0]))
        np.testing.assert_allclose(hermitian_eigendecompose(m).eigenvalues, [0.0, 1.0])

    def test_random_rank_one(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            mu = rng.standard_normal(6) + 1j * rng.standard_normal(6)
            vals = hermitian_eigendecompose(mean_outer(mu)).eigenvalues
            assert abs(vals[-1] - np.vdot(mu, mu).real) <= 1e-12
            assert np.all(np.abs(vals[:-1]) <= 1e-12)


class TestEnsembleDensity:
    def test_maximally_mixed(self):
        ens = PureStateEnsemble(np.array([KET0, KET1]), [0.5, 0.5])
        np.testing.assert_array_equal(ensemble_density(ens), np.eye(2) / 2)

    def test_pure(self):
        psi = np.array([0.6, 0.8j])
        np.testing.assert_allclose(ensemble_density(PureStateEnsemble(psi[None], [1.0])), np.outer(psi, psi.conj()))

    def test_mixed_route(self):
        ens = random_ensemble(np.random.default_rng(6), 5, 3)
        np.testing.assert_allclose(ensemble_density(outer_product_map(ens)), ensemble_density(ens), atol=1e-15)
        mixed = MixedStateEnsemble(np.array([np.eye(2) / 2, np.diag([1.0, 0.0])]), [0.5, 0.5])
        np.testing.assert_allclose(ensemble_density(mixed), np.diag([0.75, 0.25]))


class TestIdentityResidual:
    def test_random_sweep(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            d = int(rng.integers(1, 65))
            ens = random_ensemble(rng, int(rng.integers(1, 201)), d, offset=rng.uniform(0, 1))
            assert decomposition_identity_residual(ens) <= 1e-13 * d

    def test_centered(self):
        ens = symmetrize(random_ensemble(np.random.default_rng(8), 30, 8))
        m = moments(ens)
        assert np.linalg.norm(m.ensemble_density - m.covariance) <= 1e-13 * 8

    def test_single_state(self):
        ens = random_ensemble(np.random.default_rng(9), 1, 5)
        assert decomposition_identity_residual(ens) == pytest.approx(0.0, abs=1e-16)


def test_global_phases_change_mean_not_density():
    rng = np.random.default_rng(10)
    ens = random_ensemble(rng, 15, 4, offset=0.8)
    phased = PureStateEnsemble(ens.states * np.exp(1j * rng.uniform(0, 2 * np.pi, 15))[:, None], ens.probs)
    assert np.linalg.norm(ensemble_density(phased) - ensemble_density(ens)) <= 1e-13
    assert np.linalg.norm(second_moment_matrix(phased) - second_moment_matrix(ens)) <= 1e-13
    assert np.linalg.norm(mean_vector(phased) - mean_vector(ens)) > 1e-3


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(1, 16), st.booleans(), st.integers(0, 2**32 - 1))
def test_property_moment_invariants(n, d, uniform, seed):
    ens = random_ensemble(np.random.default_rng(seed), n, d, uniform=uniform)
    m = moments(ens)
    for mat in (m.covariance, m.second_moments, m.mean_outer, m.ensemble_density):
        assert np.linalg.norm(mat - mat.conj().T) <= 1e-12
    assert np.linalg.eigvalsh(m.covariance).min() >= -1e-10
    assert np.linalg.eigvalsh(m.mean_outer).min() >= -1e-10
    assert abs(np.trace(m.ensemble_density) - 1.0) <= 1e-10
    assert m.identity_residual() <= 1e-13 * d
