import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import mean_eigenvector_ensemble, random_ensemble, random_states
from covprep.dataset import PureStateEnsemble, symmetrize
from covprep.errors import LengthMismatch, NotNormalized, NotSorted, OutOfRange, ZeroMean
from covprep.moments import mean_direction, moments
from covprep.numkernel import hermitian_eigendecompose, random_hermitian
from covprep.spectral import (diagonal_relation, eigenvalue_gap_bound_check, eigenvector_error_closed_form,
                              eigenvector_error_direct, eigenvector_error_report, eigenvector_error_table,
                              interlacing_check, shared_spectrum_check, weyl_general_check, weyl_general_violation,
                              weyl_rank_one_check)


def spectra(ens):
    m = moments(ens)
    return (hermitian_eigendecompose(m.ensemble_density).eigenvalues,
            hermitian_eigendecompose(m.covariance).eigenvalues, m.mean_norm_sq)


class TestInterlacing:
    def test_random_uncentered(self):
        r, q, _ = spectra(random_ensemble(np.random.default_rng(0), 30, 8, offset=0.4))
        report = interlacing_check(r, q)
        assert report.satisfied
        assert np.all(report.per_index_gaps >= -report.tolerance)

    def test_identical_lists(self):
        report = interlacing_check([0.1, 0.2, 0.7], [0.1, 0.2, 0.7])
        assert report.satisfied
        np.testing.assert_array_equal(report.per_index_gaps, 0)

    def test_counterexample(self):
        report = interlacing_check([0.0, 1.0], [0.5, 0.6])
        assert not report.satisfied
        assert report.max_violation == pytest.approx(0.5)

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            interlacing_check([0, 1], [0, 1, 2])
        with pytest.raises(NotSorted):
            interlacing_check([1, 0], [0, 1])

    def test_second_moment_chain(self):
        m = moments(random_ensemble(np.random.default_rng(1), 12, 5, offset=0.3))
        t = hermitian_eigendecompose(m.second_moments).eigenvalues
        q = hermitian_eigendecompose(m.covariance).eigenvalues
        assert interlacing_check(t, q).satisfied


class TestGapBound:
    def test_random(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            r, q, mu2 = spectra(random_ensemble(rng, int(rng.integers(1, 60)), int(rng.integers(1, 33)),
                                                offset=rng.uniform(0, 1)))
            assert eigenvalue_gap_bound_check(r, q, mu2)

    def test_centered(self):
        r, q, mu2 = spectra(symmetrize(random_ensemble(np.random.default_rng(3), 10, 4)))
        assert mu2 <= 1e-28
        assert eigenvalue_gap_bound_check(r, q, mu2)
        np.testing.assert_allclose(r, q, atol=1e-14)

    def test_constructed_violation(self):
        q = np.array([0.1, 0.2, 0.7])
        assert not eigenvalue_gap_bound_check(q + 2 * 0.05, q, 0.05)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            eigenvalue_gap_bound_check([0.0], [0.0, 1.0], 0.1)


class TestEigenvectorError:
    def test_eigenvector_has_zero_error(self):
        a = np.diag([0.0, 1.0, 2.0])
        assert eigenvector_error_direct(a, [0, 1, 0]) == 0.0

    def test_hand_computed_quarter(self):
        assert eigenvector_error_direct(np.diag([0.0, 1.0]), np.array([1.0, 1.0]) / np.sqrt(2)) == pytest.approx(0.25)

    def test_identity(self):
        for psi in random_states(np.random.default_rng(4), 5, 4):
            assert eigenvector_error_direct(np.eye(4), psi) <= 1e-15

    def test_not_normalized(self):
        with pytest.raises(NotNormalized):
            eigenvector_error_direct(np.eye(2), [1.0, 1.0])

    def test_closed_form_examples(self):
        assert eigenvector_error_closed_form(0.3, 0.0) == 0.0
        assert eigenvector_error_closed_form(0.3, 1.0) == 0.0
        assert eigenvector_error_closed_form(0.1, 0.5) == pytest.approx(0.0025)
        with pytest.raises(OutOfRange):
            eigenvector_error_closed_form(0.1, 1.5)
        with pytest.raises(OutOfRange):
            eigenvector_error_closed_form(-0.1, 0.5)

    def test_report_matches_on_ensemble(self):
        ens = random_ensemble(np.random.default_rng(5), 15, 6, offset=0.5)
        m = moments(ens)
        q_vecs = hermitian_eigendecompose(m.covariance).eigenvectors
        for j in range(6):
            rep = eigenvector_error_report(m.ensemble_density, q_vecs[:, j], m.mean)
            assert abs(rep.direct_error - rep.closed_form_error) <= 1e-10

    def test_table_both_directions(self):
        rng = np.random.default_rng(6)
        for _ in range(30):
            ens = random_ensemble(rng, int(rng.integers(1, 101)), int(rng.integers(1, 33)),
                                  uniform=bool(rng.integers(2)), offset=rng.uniform(0, 1))
            assert eigenvector_error_table(ens).max_discrepancy() <= 1e-10


class TestSharedSpectrum:
    def test_constructed_ensemble(self):
        rng = np.random.default_rng(7)
        for d in (3, 5, 8, 16):
            ens, u = mean_eigenvector_ensemble(rng, d)
            report = shared_spectrum_check(ens)
            assert report.applies and report.holds
            assert report.shift_error <= 1e-10 and report.residual_mismatch <= 1e-10
            assert report.mean_norm_sq == pytest.approx(0.36)

    def test_centered_raises(self):
        with pytest.raises(ZeroMean):
            shared_spectrum_check(PureStateEnsemble(np.array([[1.0, 0.0], [-1.0, 0.0]]), [0.5, 0.5]))

    def test_generic_makes_no_claim(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            report = shared_spectrum_check(random_ensemble(rng, 10, 5, offset=0.2))
            assert report.overlap < 1.0 - 1e-6
            assert not report.applies and not report.holds


class TestDiagonalRelation:
    def test_orthogonal_to_mean(self):
        ens = random_ensemble(np.random.default_rng(10), 10, 4, offset=0.5)
        _, v_mu = mean_direction(moments(ens).mean)
        phi = np.array([-np.conj(v_mu[1]), np.conj(v_mu[0]), 0, 0])
        phi /= np.linalg.norm(phi)
        rel = diagonal_relation(ens, phi)
        assert rel.r_phi == pytest.approx(rel.q_phi, abs=1e-14)

    def test_mean_direction(self):
        ens = random_ensemble(np.random.default_rng(11), 10, 4, offset=0.5)
        mu2, v_mu = mean_direction(moments(ens).mean)
        rel = diagonal_relation(ens, v_mu)
        assert rel.r_phi == pytest.approx(rel.q_phi + mu2, abs=1e-14)

    def test_random_and_bounds(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            d = int(rng.integers(1, 10))
            ens = random_ensemble(rng, int(rng.integers(1, 20)), d, offset=rng.uniform(0, 1))
            rel = diagonal_relation(ens, random_states(rng, 1, d)[0])
            mu2 = moments(ens).mean_norm_sq
            assert rel.residual <= 1e-12
            assert rel.q_phi - 1e-12 <= rel.r_phi <= rel.q_phi + mu2 + 1e-12

    def test_not_normalized(self):
        with pytest.raises(NotNormalized):
            diagonal_relation(random_ensemble(np.random.default_rng(13), 3, 2), [1.0, 1.0])


class TestWeyl:
    def test_trivial(self):
        assert weyl_rank_one_check(np.zeros((2, 2)), 1.0, [1.0, 0.0])

    def test_covariance_and_mean(self):
        rng = np.random.default_rng(14)
        for _ in range(30):
            m = moments(random_ensemble(rng, 20, 6, offset=rng.uniform(0.1, 1)))
            mu2, v_mu = mean_direction(m.mean)
            assert weyl_rank_one_check(m.covariance, mu2, v_mu)

    def test_general_random_pairs(self):
        rng = np.random.default_rng(15)
        for _ in range(50):
            d = int(rng.integers(1, 9))
            assert weyl_general_check(random_hermitian(d, rng), random_hermitian(d, rng))

    def test_commuting_pair_is_tight(self):
        # for B = I every chain holds with equality somewhere
        assert weyl_general_violation(np.diag([0.0, 1.0, 2.0]), np.eye(3)) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            weyl_general_violation(np.eye(2), np.eye(3))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 50), st.integers(1, 16), st.booleans(), st.floats(0, 1.5), st.integers(0, 2**32 - 1))
def test_property_spectral_relations(n, d, uniform, offset, seed):
    ens = random_ensemble(np.random.default_rng(seed), n, d, uniform=uniform, offset=offset)
    r, q, mu2 = spectra(ens)
    assert interlacing_check(r, q).satisfied
    assert eigenvalue_gap_bound_check(r, q, mu2)
    assert eigenvector_error_table(ens).max_discrepancy() <= 1e-10
