import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from markov_sa.errors import DomainError, NonStochastic, ReducibleOrDegenerate
from markov_sa.linear import section3_model
from markov_sa.markov import (
    clt_covariance,
    make_chain,
    martingale_covariance,
    poisson_solve_matrix,
    poisson_solve_vector,
    sample_path,
    two_state,
)

from oracles import autocov_sum, lag_for, random_chain_matrix, stationary_by_eigen


class TestMakeChain:
    def test_symmetric_two_state(self):
        c = make_chain([[0.7, 0.3], [0.3, 0.7]])
        np.testing.assert_allclose(c.pi, [0.5, 0.5], atol=1e-12)

    def test_asymmetric_two_state(self):
        # pi0 * 0.1 = pi1 * 0.3
        c = make_chain([[0.9, 0.1], [0.3, 0.7]])
        np.testing.assert_allclose(c.pi, [0.75, 0.25], atol=1e-12)

    def test_identity_rejected(self):
        with pytest.raises(ReducibleOrDegenerate):
            make_chain(np.eye(2))

    def test_reducible_rejected(self):
        P = np.array([[0.5, 0.5, 0, 0], [0.5, 0.5, 0, 0], [0, 0, 0.5, 0.5], [0, 0, 0.5, 0.5]])
        with pytest.raises(ReducibleOrDegenerate):
            make_chain(P)

    @pytest.mark.parametrize(
        "P",
        [
            [[0.5, 0.4], [0.3, 0.7]],
            [[0.5, 0.5, 0.0]],
            [[1.2, -0.2], [0.5, 0.5]],
            [[np.nan, 1.0], [0.5, 0.5]],
        ],
    )
    def test_bad_matrices(self, P):
        with pytest.raises(NonStochastic):
            make_chain(P)

    def test_roundoff_renormalised(self):
        c = make_chain([[0.7 + 5e-10, 0.3], [0.3, 0.7]])
        np.testing.assert_allclose(c.P.sum(axis=1), 1.0, atol=1e-15)

    def test_immutable(self):
        c = two_state(0.7)
        with pytest.raises(ValueError):
            c.P[0, 0] = 1.0

    def test_periodic_chain_admitted(self):
        c = make_chain([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_allclose(c.pi, [0.5, 0.5])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_stationarity(self, n, seed):
        P = random_chain_matrix(np.random.default_rng(seed), n)
        c = make_chain(P)
        assert np.all(c.pi >= 0)
        assert abs(c.pi.sum() - 1) < 1e-12
        assert np.max(np.abs(c.pi @ c.P - c.pi)) < 1e-10
        np.testing.assert_allclose(c.pi, stationary_by_eigen(c.P), atol=1e-10)


class TestTwoState:
    def test_paper_chain(self):
        c = two_state(0.7)
        np.testing.assert_allclose(c.P, [[0.7, 0.3], [0.3, 0.7]], atol=1e-15)
        np.testing.assert_allclose(c.pi, [0.5, 0.5])

    def test_iid_case(self):
        np.testing.assert_array_equal(two_state(0.5).P, np.full((2, 2), 0.5))

    def test_second_eigenvalue(self):
        c = two_state(0.3)
        ev = np.sort(np.linalg.eigvals(c.P).real)
        np.testing.assert_allclose(ev, [-0.4, 1.0], atol=1e-12)
        assert c.second_eigenvalue_modulus() == pytest.approx(0.4)

    @pytest.mark.parametrize("a", [0.0, 1.0, -0.1, 1.5])
    def test_domain(self, a):
        with pytest.raises(DomainError):
            two_state(a)


class TestSamplePath:
    def test_iid_frequency(self):
        path = sample_path(two_state(0.5), 1_000_000, 11)
        assert abs(path.mean() - 0.5) < 3 * 0.5 / 1e3

    def test_deterministic(self):
        c = two_state(0.7)
        np.testing.assert_array_equal(sample_path(c, 1000, 5), sample_path(c, 1000, 5))
        assert not np.array_equal(sample_path(c, 1000, 5), sample_path(c, 1000, 6))

    def test_lag1_autocovariance(self):
        # stationary two-state: Cov(Phi_0, Phi_1) = (2a - 1) / 4
        path = sample_path(two_state(0.7), 1_000_000, 3).astype(float)
        x = path - path.mean()
        ac = np.mean(x[:-1] * x[1:])
        assert ac == pytest.approx(0.1, rel=0.05)

    def test_fixed_init(self):
        path = sample_path(two_state(0.7), 10, 0, init=1)
        assert path[0] == 1 and path.shape == (11,)

    def test_zero_steps(self):
        assert sample_path(two_state(0.7), 0, 0).shape == (1,)

    def test_transition_frequencies(self):
        P = np.array([[0.1, 0.6, 0.3], [0.5, 0.0, 0.5], [0.2, 0.2, 0.6]])
        path = sample_path(make_chain(P), 300_000, 9)
        counts = np.zeros((3, 3))
        np.add.at(counts, (path[:-1], path[1:]), 1)
        np.testing.assert_allclose(counts / counts.sum(axis=1, keepdims=True), P, atol=0.01)

    def test_generator_is_consumed(self):
        rng = np.random.default_rng(1)
        a = sample_path(two_state(0.7), 50, rng)
        b = sample_path(two_state(0.7), 50, rng)
        assert not np.array_equal(a, b)

    def test_bad_inputs(self):
        with pytest.raises(DomainError):
            sample_path(two_state(0.7), -1, 0)
        with pytest.raises(DomainError):
            sample_path(two_state(0.7), 5, 0, init=2)


class TestPoisson:
    def test_constant_forcing(self):
        np.testing.assert_allclose(poisson_solve_vector(two_state(0.7), [3.0, 3.0]), 0.0, atol=1e-15)

    def test_identity_forcing(self):
        np.testing.assert_allclose(poisson_solve_vector(two_state(0.7), [0.0, 1.0]), [-5 / 6, 5 / 6], atol=1e-12)

    @pytest.mark.parametrize("a", [0.3, 0.5, 0.7])
    def test_difference(self, a):
        gh = poisson_solve_vector(two_state(a), [0.0, 1.0])
        assert gh[0] - gh[1] == pytest.approx(-1 / (2 * (1 - a)), abs=1e-10)

    @pytest.mark.parametrize("a", [0.3, 0.5, 0.7])
    def test_matches_unit_normalised_solution(self, a):
        # solution pinned by g_hat(1) = 1 instead of pi(g_hat) = 0
        gh = poisson_solve_vector(two_state(a), [0.0, 1.0])
        pinned = np.array([0.5 * (1 - 2 * a) / (1 - a), 1.0])
        np.testing.assert_allclose(gh - gh.mean(), pinned - pinned.mean(), atol=1e-12)

    def test_matrix_linearity(self):
        c = two_state(0.7)
        D = np.array([[6.0, 0.0], [-4.0, 6.0]])
        M = np.stack([0 * D, D])
        Mh = poisson_solve_matrix(c, M)
        gh = poisson_solve_vector(c, [0.0, 1.0])
        np.testing.assert_allclose(Mh, gh[:, None, None] * D, atol=1e-12)

    def test_matrix_entrywise(self):
        rng = np.random.default_rng(2)
        c = make_chain(random_chain_matrix(rng, 5))
        M = rng.standard_normal((5, 3, 3))
        Mh = poisson_solve_matrix(c, M)
        for i in range(3):
            for j in range(3):
                np.testing.assert_array_equal(Mh[:, i, j], poisson_solve_vector(c, M[:, i, j]))

    def test_matrix_constant(self):
        M = np.stack([np.eye(2)] * 2)
        np.testing.assert_allclose(poisson_solve_matrix(two_state(0.4), M), 0.0, atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_residual_and_zero_mean(self, n, d, seed):
        rng = np.random.default_rng(seed)
        c = make_chain(random_chain_matrix(rng, n, sparsity=0.3))
        g = rng.standard_normal((n, d))
        gh = poisson_solve_vector(c, g)
        gt = g - c.pi @ g
        assert np.max(np.abs(c.P @ gh - gh + gt)) <= 1e-10
        assert np.max(np.abs(c.pi @ gh)) <= 1e-10

    def test_shape_checked(self):
        with pytest.raises(DomainError):
            poisson_solve_vector(two_state(0.7), [1.0, 2.0, 3.0])


class TestCLTCovariance:
    def test_constant(self):
        np.testing.assert_allclose(clt_covariance(two_state(0.7), [[1.0, 2.0], [1.0, 2.0]]), 0.0, atol=1e-14)

    def test_iid(self):
        c = two_state(0.5)
        g = np.array([[1.0, -2.0], [3.0, 0.5]])
        gt = g - c.pi @ g
        np.testing.assert_allclose(clt_covariance(c, g), gt.T @ np.diag(c.pi) @ gt, atol=1e-12)

    def test_section3_forcing(self):
        m = section3_model(0.7)
        g = m.A @ m.thetastar - m.b
        v = np.array([-4.0, -2.0])
        expected = 0.7 / 0.3 * np.outer(v, v)
        np.testing.assert_allclose(clt_covariance(m.chain, g), expected, atol=1e-10)
        np.testing.assert_allclose(autocov_sum(m.chain.P, m.chain.pi, g, 200), expected, atol=1e-10)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_matches_autocovariance_sum(self, n, d, seed):
        rng = np.random.default_rng(seed)
        c = make_chain(random_chain_matrix(rng, n))
        g = rng.standard_normal((n, d))
        S = clt_covariance(c, g)
        np.testing.assert_allclose(S, autocov_sum(c.P, c.pi, g, lag_for(c.P)), atol=1e-8)
        assert np.allclose(S, S.T)
        assert np.linalg.eigvalsh(S).min() >= -1e-9
        np.testing.assert_allclose(martingale_covariance(c, g), S, atol=1e-10)

    def test_scalar_forcing_shape(self):
        assert clt_covariance(two_state(0.7), [0.0, 1.0]).shape == (1, 1)
