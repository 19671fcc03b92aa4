"""Server side: round aggregation, the closed-form covariance refit,
the safe damping factor, and the diagnostic round bound."""

import math

import numpy as np
import pytest

from taskcov.core import DimensionMismatch
from taskcov.server import (AggregationState, aggregate_round, omega_step,
                            rho_bound, theoretical_round_bound,
                            MissingDelta, ZeroWeights, DegenerateDiagonal)

from conftest import make_sigma
from oracles import random_psd_trace1, coupling_objective


def fresh_state(rng, m, d, sigma, lam):
    b = rng.standard_normal((m, d))
    return AggregationState(b=b.copy(), w=(sigma @ b) / lam)


class TestAggregateRound:
    def test_single_round_matches_manual(self, rng):
        m, d, lam = 3, 4, 0.3
        sigma = make_sigma(rng, m)
        st = fresh_state(rng, m, d, sigma, lam)
        b0, w0 = st.b.copy(), st.w.copy()
        deltas = [rng.standard_normal(d) for _ in range(m)]
        out = aggregate_round(st, deltas, sigma, lam)
        assert out is st
        assert st.round_index == 1
        np.testing.assert_allclose(st.b, b0 + np.vstack(deltas), atol=0)
        np.testing.assert_allclose(st.w, w0 + sigma @ np.vstack(deltas) / lam,
                                   atol=1e-14)

    def test_w_stays_coupled_to_b(self, rng):
        # w = sigma @ b / lam is maintained incrementally, never recomputed
        m, d, lam = 4, 6, 0.7
        sigma = make_sigma(rng, m)
        st = fresh_state(rng, m, d, sigma, lam)
        for _ in range(20):
            aggregate_round(st, [0.1 * rng.standard_normal(d)
                                 for _ in range(m)], sigma, lam)
        assert st.round_index == 20
        np.testing.assert_allclose(st.w, sigma @ st.b / lam, atol=1e-12)

    def test_none_delta_rejected(self, rng):
        sigma = make_sigma(rng, 2)
        st = fresh_state(rng, 2, 3, sigma, 0.5)
        with pytest.raises(MissingDelta, match="task 1"):
            aggregate_round(st, [np.zeros(3), None], sigma, 0.5)

    def test_wrong_count_rejected(self, rng):
        sigma = make_sigma(rng, 3)
        st = fresh_state(rng, 3, 2, sigma, 0.5)
        with pytest.raises(MissingDelta):
            aggregate_round(st, [np.zeros(2)] * 2, sigma, 0.5)

    def test_wrong_shape_rejected(self, rng):
        sigma = make_sigma(rng, 2)
        st = fresh_state(rng, 2, 3, sigma, 0.5)
        with pytest.raises(DimensionMismatch):
            aggregate_round(st, [np.zeros(3), np.zeros(4)], sigma, 0.5)

    def test_failed_round_leaves_state_untouched(self, rng):
        sigma = make_sigma(rng, 2)
        st = fresh_state(rng, 2, 3, sigma, 0.5)
        b0, w0 = st.b.copy(), st.w.copy()
        with pytest.raises(MissingDelta):
            aggregate_round(st, [np.zeros(3), None], sigma, 0.5)
        np.testing.assert_array_equal(st.b, b0)
        np.testing.assert_array_equal(st.w, w0)
        assert st.round_index == 0

    def test_mutates_shared_arrays_in_place(self, rng):
        # the driver hands the server views of its own arrays
        sigma = make_sigma(rng, 2)
        b = np.zeros((2, 3))
        w = np.zeros((2, 3))
        st = AggregationState(b=b, w=w)
        aggregate_round(st, [np.ones(3), np.ones(3)], sigma, 1.0)
        assert st.b is b and st.w is w
        np.testing.assert_array_equal(b, np.ones((2, 3)))


class TestOmegaStep:
    def test_identical_tasks(self):
        # two equal predictor rows couple fully: sigma = [[.5,.5],[.5,.5]]
        w = np.array([[1.0, 2.0], [1.0, 2.0]])
        cov = omega_step(w)
        np.testing.assert_allclose(cov.sigma, np.full((2, 2), 0.5),
                                   atol=1e-12)
        assert cov.floored  # rank one, the zero direction hit the floor

    def test_orthogonal_equal_norm_tasks(self):
        # unrelated tasks of equal strength decouple: sigma = I / m
        w = np.array([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
        cov = omega_step(w)
        np.testing.assert_allclose(cov.sigma, np.eye(2) / 2, atol=1e-12)
        assert not cov.floored
        np.testing.assert_allclose(cov.sigma @ cov.omega, np.eye(2),
                                   atol=1e-10)
        cov.validate()

    def test_trace_one_symmetric_psd(self, rng):
        for m, d in [(2, 5), (3, 8), (6, 10)]:
            cov = omega_step(rng.standard_normal((m, d)))
            assert abs(np.trace(cov.sigma) - 1.0) < 1e-12
            np.testing.assert_allclose(cov.sigma, cov.sigma.T, atol=0)
            assert np.linalg.eigvalsh(cov.sigma).min() > -1e-12
            cov.validate()

    def test_beats_random_candidates(self, rng):
        # the refit minimizes the coupled regularizer over trace-1 PSD
        # matrices; no random candidate should do better
        w = rng.standard_normal((3, 6))
        cov = omega_step(w)
        best = coupling_objective(w, cov.sigma)
        for _ in range(200):
            cand = random_psd_trace1(rng, 3)
            assert best <= coupling_objective(w, cand) + 1e-9

    def test_minimum_value_identity(self, rng):
        # at the optimum the coupled regularizer equals the squared sum
        # of the singular values of w
        w = rng.standard_normal((4, 7))
        cov = omega_step(w)
        want = float(np.linalg.svd(w, compute_uv=False).sum()) ** 2
        assert coupling_objective(w, cov.sigma) == pytest.approx(want,
                                                                 rel=1e-10)

    def test_scale_invariant(self, rng):
        # sigma depends on the directions only, not the overall scale
        w = rng.standard_normal((3, 5))
        np.testing.assert_allclose(omega_step(17.0 * w).sigma,
                                   omega_step(w).sigma, atol=1e-12)

    def test_zero_weights_raises(self):
        with pytest.raises(ZeroWeights):
            omega_step(np.zeros((3, 4)))

    def test_explicit_floor_on_rank_deficient(self):
        w = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 0.0]])
        cov = omega_step(w, eps=1e-6)
        assert cov.floored
        assert abs(np.trace(cov.sigma) - 1.0) < 1e-12
        assert np.all(np.isfinite(cov.omega))
        # the floored inverse caps the omega spectrum at total / eps
        total = float(np.sqrt(5.0))
        assert np.linalg.eigvalsh(cov.omega).max() <= total / 1e-6 * (1 + 1e-12)
        cov.validate()


class TestRhoBound:
    def test_diagonal_gives_eta(self):
        sigma = np.diag([0.2, 0.5, 0.3])
        assert rho_bound(sigma, 0.7) == pytest.approx(0.7, rel=1e-15)

    def test_identical_tasks_give_eta_m(self):
        m = 4
        sigma = np.full((m, m), 1.0 / m)
        assert rho_bound(sigma, 0.5) == pytest.approx(0.5 * m, rel=1e-12)

    def test_never_below_eta(self, rng):
        for _ in range(50):
            m = int(rng.integers(2, 7))
            assert rho_bound(make_sigma(rng, m), 0.9) >= 0.9 - 1e-15

    def test_nonpositive_diagonal_rejected(self):
        sigma = np.array([[1.0, 0.0], [0.0, 0.0]])
        with pytest.raises(DegenerateDiagonal):
            rho_bound(sigma, 1.0)


class TestRoundBound:
    def test_worked_example(self):
        # 1/(eta (1-theta)) = 4, ratio (1 + 2*3*1)/1 = 7, log term = 2
        got = theoretical_round_bound(mu=0.5, lam=2.0, rho=2.0, n_star=3.0,
                                      pi_star=1.0, eta=0.5, theta=0.5,
                                      eps_target=4.0 * math.exp(-2.0), m=4)
        assert got == pytest.approx(56.0, rel=1e-12)

    def test_theta_one_is_infinite(self):
        got = theoretical_round_bound(mu=0.5, lam=1.0, rho=1.0, n_star=10,
                                      pi_star=1.0, eta=1.0, theta=1.0,
                                      eps_target=1e-3, m=2)
        assert got == math.inf

    def test_monotone_in_theta(self):
        vals = [theoretical_round_bound(mu=0.5, lam=1.0, rho=1.5, n_star=20,
                                        pi_star=0.8, eta=0.9, theta=th,
                                        eps_target=1e-4, m=3)
                for th in (0.1, 0.5, 0.9)]
        assert vals[0] < vals[1] < vals[2]

    @pytest.mark.parametrize("bad", [
        dict(theta=-0.1), dict(theta=1.5), dict(eps_target=0.0),
        dict(mu=0.0), dict(lam=-1.0), dict(eta=0.0),
    ])
    def test_validation(self, bad):
        kw = dict(mu=0.5, lam=1.0, rho=1.0, n_star=5, pi_star=1.0,
                  eta=1.0, theta=0.5, eps_target=1e-3, m=2)
        kw.update(bad)
        with pytest.raises(ValueError):
            theoretical_round_bound(**kw)
