import itertools
import math

import numpy as np
import pytest

from conftest import random_mdp
from oracles import (
    enumerated_log_likelihood, enumerated_visitation, path_distribution, rejection_visits,
    rollout_visits,
)
from scaleirl.errors import (
    DimensionMismatch, DivergenceDetected, EmptyTrajectories, NonFiniteTheta,
    NonStochasticPolicy, UnequalLengths,
)
from scaleirl.maxent import (
    SolverConfig, backward_pass, empirical_feature_expectations, finite_difference_gradient,
    fit, forward_pass, gradient, gradient_check, log_likelihood, relative_error,
    sample_trajectories, trajectory_log_probs,
)
from scaleirl.mdp import assemble_mdp, estimate_start_distribution
from scaleirl.regression import REGRESSION_THETA, regression_instance
from scaleirl.trajectories import Trajectory

E1 = np.array([[1.0, 0, 0, 0]])


def two_state_chain():
    """Action 0 stays put, action 1 switches; reward 1 in state 1 when theta = e0."""
    P = np.zeros((2, 2, 2))
    P[:, 0] = np.eye(2)
    P[:, 1] = np.eye(2)[::-1]
    F = np.array([[0.0, 0, 0, 0], [1.0, 0, 0, 0]])
    return assemble_mdp(F, P, [1.0, 0.0])


def all_paths(S, A, T, s0=0):
    for tail in itertools.product(range(S), repeat=T - 1):
        for acts in itertools.product(range(A), repeat=T):
            yield Trajectory.from_arrays((s0,) + tail, acts)


class TestFeatureExpectations:
    def test_single_path(self):
        F = np.vstack([E1, np.zeros((2, 4))])
        fe = empirical_feature_expectations([Trajectory.from_arrays([0, 0, 0], [0, 1, 2])], F)
        np.testing.assert_array_equal(fe.f_tilde, [3, 0, 0, 0])
        assert (fe.m, fe.horizon) == (1, 3)

    def test_identical_trajectories(self, rng):
        F = rng.normal(size=(4, 4))
        t = Trajectory.from_arrays([0, 3, 1, 1], [0, 0, 1, 2])
        one = empirical_feature_expectations([t], F).f_tilde
        many = empirical_feature_expectations([t] * 7, F).f_tilde
        np.testing.assert_allclose(many, one, rtol=1e-15, atol=1e-15)

    def test_matches_direct_sum(self, rng):
        F = rng.normal(size=(6, 4))
        trajs = [Trajectory.from_arrays(rng.integers(0, 6, 9), rng.integers(0, 3, 9))
                 for _ in range(25)]
        total = [0.0] * 4
        for t in trajs:
            for s in t.states:
                for k in range(4):
                    total[k] += F[s, k]
        expected = np.array(total) / len(trajs)
        np.testing.assert_allclose(empirical_feature_expectations(trajs, F).f_tilde, expected,
                                   rtol=1e-12, atol=1e-12)

    def test_errors(self):
        with pytest.raises(EmptyTrajectories):
            empirical_feature_expectations([], np.zeros((2, 4)))
        with pytest.raises(UnequalLengths):
            empirical_feature_expectations([Trajectory.from_arrays([0], [0]),
                                            Trajectory.from_arrays([0, 1], [0, 0])],
                                           np.zeros((2, 4)))


class TestBackwardPass:
    def test_single_state_single_action(self):
        m = assemble_mdp(np.ones((1, 4)), np.ones((1, 1, 1)), [1.0])
        pol = backward_pass(m, [0.3, -1.0, 2.0, 0.5], 5)
        np.testing.assert_array_equal(pol.policy, [[1.0]])
        traj = Trajectory.from_arrays([0] * 5, [0] * 5)
        assert log_likelihood([traj], [0.3, -1.0, 2.0, 0.5], m, 5) == pytest.approx(0.0, abs=1e-12)

    def test_identical_action_rows_give_uniform_policy(self, rng):
        row = rng.dirichlet(np.ones(4), size=4)
        P = np.stack([row, row], axis=1)
        m = assemble_mdp(rng.normal(size=(4, 4)), P, np.full(4, 0.25))
        pol = backward_pass(m, rng.uniform(-2, 2, 4), 6)
        for t in range(6):
            np.testing.assert_allclose(pol.step_policy(t), 0.5, atol=1e-12)

    def test_two_state_chain_matches_closed_form(self):
        # from state 0 over two steps: stay (weight 1) or switch (weight e), times 2
        # free final actions, so each stay path has probability 1 / (2 + 2e)
        m = two_state_chain()
        pol = backward_pass(m, [1.0, 0, 0, 0], 2)
        stay = 1.0 / (2.0 + 2.0 * math.e)
        switch = math.e / (2.0 + 2.0 * math.e)
        trajs = [Trajectory.from_arrays(s, a) for s, a in
                 [((0, 0), (0, 0)), ((0, 0), (0, 1)), ((0, 1), (1, 0)), ((0, 1), (1, 1))]]
        lp = trajectory_log_probs(trajs, pol, m.start_distribution)
        np.testing.assert_allclose(np.exp(lp), [stay, stay, switch, switch], rtol=1e-12)
        assert np.exp(lp).sum() == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_path_probabilities_match_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        S, A, T = 3, 2, 4
        m = random_mdp(rng, S, A, sparse=bool(seed % 2))
        theta = rng.uniform(-1, 1, 4)
        pol = backward_pass(m, theta, T)
        r = m.feature_matrix @ theta
        for s0 in range(S):
            exact = path_distribution(m.transitions, r, s0, T)
            trajs = list(all_paths(S, A, T, s0))
            lp = trajectory_log_probs(trajs, pol, m.start_distribution) - math.log(
                m.start_distribution[s0])
            for t, got in zip(trajs, lp):
                key = (tuple(t.states.tolist()), tuple(t.actions.tolist()))
                assert abs(math.exp(got) - exact.get(key, 0.0)) < 1e-10

    def test_log_likelihood_matches_enumeration(self, rng):
        m = random_mdp(rng, 3, 3)
        theta = rng.uniform(-1, 1, 4)
        trajs = sample_trajectories(m, backward_pass(m, theta, 4), 30, rng)
        other = rng.uniform(-1, 1, 4)
        for th in (theta, other):
            expected = enumerated_log_likelihood(m.transitions, m.feature_matrix @ th,
                                                 m.start_distribution, trajs, 4)
            assert log_likelihood(trajs, th, m, 4) == pytest.approx(expected, abs=1e-10)

    def test_shorter_trajectories_are_prefix_marginals(self, rng):
        m = random_mdp(rng, 3, 2)
        theta = rng.uniform(-1, 1, 4)
        pol = backward_pass(m, theta, 4)
        prefixes = {}
        for t in all_paths(3, 2, 4, s0=1):
            key = (tuple(t.states[:2]), tuple(t.actions[:2]))
            lp = trajectory_log_probs([t], pol, m.start_distribution)[0]
            prefixes[key] = prefixes.get(key, 0.0) + math.exp(lp)
        for (s, a), p in prefixes.items():
            lp = trajectory_log_probs([Trajectory.from_arrays(s, a)], pol, m.start_distribution)
            assert math.exp(lp[0]) == pytest.approx(p, abs=1e-12)

    def test_policy_rows_sum_to_one(self, rng):
        for _ in range(10):
            m = random_mdp(rng, int(rng.integers(1, 7)), int(rng.integers(1, 4)))
            pol = backward_pass(m, rng.uniform(-3, 3, 4), 6)
            pi = np.exp(pol.log_policy)
            assert np.all((pi >= 0) & (pi <= 1))
            assert np.all(np.abs(pi.sum(axis=2) - 1) <= 1e-9)

    def test_large_theta_stays_finite(self):
        mdp, trajs, _ = regression_instance()
        for theta in ([50.0, -50.0, 50.0, -50.0], [-50.0] * 4, [50.0, 0, 0, 0]):
            pol = backward_pass(mdp, theta, 5)
            assert np.all(np.isfinite(pol.log_partition))
            D, Dt = forward_pass(mdp, pol, 5)
            assert np.all(np.isfinite(D)) and abs(D.sum() - 5) < 1e-6
            assert np.isfinite(log_likelihood(trajs, theta, mdp, 5))

    def test_non_finite_theta(self):
        mdp, _, _ = regression_instance()
        with pytest.raises(NonFiniteTheta):
            backward_pass(mdp, [np.nan, 0, 0, 0], 3)
        with pytest.raises(DimensionMismatch):
            backward_pass(mdp, [0.0, 0.0], 3)


class TestForwardPass:
    def test_three_cycle(self):
        P = np.zeros((3, 3, 3))
        for s in range(3):
            P[s, :, (s + 1) % 3] = 1.0
        m = assemble_mdp(np.eye(3, 4), P, [1.0, 0, 0])
        for policy in (backward_pass(m, [0.5, -1, 2, 0], 3), np.full((3, 3), 1 / 3)):
            D, Dt = forward_pass(m, policy, 3)
            np.testing.assert_allclose(Dt, np.eye(3), atol=1e-15)
            np.testing.assert_allclose(D, [1, 1, 1], atol=1e-15)

    def test_conservation(self, rng):
        for _ in range(20):
            S, T = int(rng.integers(1, 7)), int(rng.integers(1, 9))
            m = random_mdp(rng, S, int(rng.integers(1, 4)), sparse=True)
            pol = backward_pass(m, rng.uniform(-2, 2, 4), T)
            D, Dt = forward_pass(m, pol, T)
            assert np.all(np.abs(Dt.sum(axis=1) - 1) <= 1e-9)
            assert abs(D.sum() - T) <= 1e-6 and np.all(D >= 0)

    def test_maxent_visitation_matches_enumeration(self, rng):
        m = random_mdp(rng, 3, 2, sparse=True)
        theta = rng.uniform(-1, 1, 4)
        D, _ = forward_pass(m, backward_pass(m, theta, 4), 4)
        expected = enumerated_visitation(m.transitions, m.feature_matrix @ theta,
                                         m.start_distribution, 4)
        np.testing.assert_allclose(D, expected, atol=1e-12)

    def test_stationary_policy_matches_rollouts(self, rng):
        m = random_mdp(rng, 5, 3)
        policy = rng.dirichlet(np.ones(3), size=5)
        D, _ = forward_pass(m, policy, 6)
        visits = rollout_visits(np.asarray(m.transitions), policy, m.start_distribution, 6,
                                200_000, rng)
        se = visits.std(axis=0, ddof=1) / math.sqrt(len(visits))
        assert np.all(np.abs(D - visits.mean(axis=0)) < 3 * se)

    def test_maxent_visitation_matches_rejection_sampling(self, rng):
        m = random_mdp(rng, 5, 3)
        m = assemble_mdp(0.3 * m.feature_matrix, m.transitions, m.start_distribution)
        theta = rng.uniform(-1, 1, 4)
        D, _ = forward_pass(m, backward_pass(m, theta, 6), 6)
        visits = rejection_visits(np.asarray(m.transitions), m.feature_matrix @ theta,
                                  m.start_distribution, 6, 200_000, rng)
        se = visits.std(axis=0, ddof=1) / math.sqrt(len(visits))
        assert np.all(np.abs(D - visits.mean(axis=0)) < 3 * se)

    def test_reward_shift_invariance(self, rng):
        m = random_mdp(rng, 5, 3)
        theta = np.array([0.7, -0.4, 0.2, 0.9])
        F = np.array(m.feature_matrix)
        F[:, 0] += 2.5 / theta[0]  # every state reward rises by 2.5
        shifted = assemble_mdp(F, m.transitions, m.start_distribution)
        a, b = backward_pass(m, theta, 6), backward_pass(shifted, theta, 6)
        np.testing.assert_allclose(b.rewards - a.rewards, 2.5, atol=1e-12)
        np.testing.assert_allclose(np.exp(a.log_policy), np.exp(b.log_policy), atol=1e-9)
        np.testing.assert_allclose(forward_pass(m, a, 6)[1], forward_pass(shifted, b, 6)[1],
                                   atol=1e-9)

    def test_time_indexed_array_policy(self, rng):
        m = random_mdp(rng, 4, 2)
        pis = rng.dirichlet(np.ones(2), size=(5, 4))
        D, Dt = forward_pass(m, pis, 5)
        manual = np.array(m.start_distribution)
        for t in range(4):
            manual = sum(manual[s] * pis[t, s, a] * m.transitions[s, a]
                         for s in range(4) for a in range(2))
            np.testing.assert_allclose(Dt[t + 1], manual, atol=1e-14)

    def test_non_stochastic_policy(self, rng):
        m = random_mdp(rng, 3, 2)
        with pytest.raises(NonStochasticPolicy):
            forward_pass(m, np.full((3, 2), 0.6), 4)
        with pytest.raises(NonStochasticPolicy):
            forward_pass(m, np.array([[1.5, -0.5]] * 3), 4)


class TestGradient:
    def test_matched_expectations_give_zero(self, rng):
        F = rng.normal(size=(5, 4))
        D = rng.random(5)
        np.testing.assert_array_equal(gradient(F.T @ D, D, F), np.zeros(4))
        np.testing.assert_array_equal(gradient(np.zeros(4), np.zeros(5), F), np.zeros(4))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            gradient(np.zeros(4), np.zeros(3), np.zeros((5, 4)))

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(100 + seed)
        S, A, T = int(rng.integers(2, 7)), int(rng.integers(1, 4)), int(rng.integers(1, 7))
        base = random_mdp(rng, S, A, sparse=bool(seed % 2))
        theta = rng.uniform(-1, 1, 4)
        trajs = sample_trajectories(base, backward_pass(base, rng.uniform(-1, 1, 4), T), 30, rng)
        m = assemble_mdp(base.feature_matrix, base.transitions,
                         estimate_start_distribution(trajs, S))
        fe = empirical_feature_expectations(trajs, m.feature_matrix)
        D, _ = forward_pass(m, backward_pass(m, theta, T), T)
        analytic = gradient(fe.f_tilde, D, m.feature_matrix)
        numeric = finite_difference_gradient(trajs, theta, m, T)
        assert np.all(relative_error(analytic, numeric) < 1e-5)

    def test_regression_instance_gradient_check(self):
        mdp, trajs, theta = regression_instance()
        assert gradient_check(mdp, trajs, theta) < 1e-5
        assert gradient_check(mdp, trajs, np.zeros(4)) < 1e-5

    def test_relative_error_floor(self):
        assert relative_error([0.0], [1e-11])[0] < 1e-6
        assert relative_error([2.0], [1.0])[0] == 0.5


class TestLikelihood:
    def test_doubling_trajectories_doubles_likelihood(self):
        mdp, trajs, theta = regression_instance()
        one = log_likelihood(trajs, theta, mdp, 5)
        assert log_likelihood(trajs + trajs, theta, mdp, 5) == pytest.approx(2 * one, rel=1e-13)

    def test_probabilities_of_all_paths_sum_to_one(self, rng):
        m = random_mdp(rng, 3, 2)
        pol = backward_pass(m, rng.uniform(-1, 1, 4), 3)
        total = 0.0
        for s0 in range(3):
            lp = trajectory_log_probs(list(all_paths(3, 2, 3, s0)), pol, m.start_distribution)
            total += np.exp(lp).sum()
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_trajectory_longer_than_horizon(self, rng):
        m = random_mdp(rng, 2, 2)
        with pytest.raises(ValueError):
            log_likelihood([Trajectory.from_arrays([0] * 4, [0] * 4)], np.zeros(4), m, 3)


class TestFit:
    def test_zero_iterations_returns_init(self):
        mdp, trajs, _ = regression_instance()
        for method in ("gradient", "lbfgs"):
            sol = fit(mdp, trajs, SolverConfig(method=method, max_iterations=0,
                                               theta_init=(0.1, 0.2, 0.3, 0.4)))
            np.testing.assert_array_equal(sol.theta, [0.1, 0.2, 0.3, 0.4])
            assert not sol.converged and sol.iterations_used == 0

    def test_gradient_ascent_is_monotone_and_converges(self):
        mdp, trajs, _ = regression_instance()
        sol = fit(mdp, trajs, SolverConfig(learning_rate=0.05, max_iterations=2000))
        trace = np.array(sol.likelihood_trace)
        assert np.all(np.diff(trace) >= -1e-10 * np.abs(trace[:-1]))
        assert sol.converged and sol.feature_mismatch < 1e-4
        np.testing.assert_array_equal(sol.state_rewards, mdp.feature_matrix @ sol.theta)
        assert np.all(np.abs(sol.policy.sum(axis=1) - 1) <= 1e-9)
        assert abs(sol.visitation.sum() - sol.horizon) <= 1e-6

    def test_lbfgs_agrees_with_gradient_ascent(self):
        mdp, trajs, _ = regression_instance()
        slow = fit(mdp, trajs, SolverConfig(learning_rate=0.05, gradient_tolerance=1e-7,
                                            max_iterations=20000))
        quick = fit(mdp, trajs, SolverConfig(method="lbfgs", gradient_tolerance=1e-7))
        assert quick.converged and quick.iterations_used < 100
        np.testing.assert_allclose(quick.theta, slow.theta, atol=1e-4)
        assert quick.likelihood_trace[-1] == pytest.approx(slow.likelihood_trace[-1], abs=1e-8)

    def test_planted_theta_is_approximately_recovered(self):
        mdp, _, _ = regression_instance()
        rng = np.random.default_rng(0)
        trajs = sample_trajectories(mdp, backward_pass(mdp, REGRESSION_THETA, 5), 4000, rng)
        sol = fit(mdp, trajs, SolverConfig(method="lbfgs"))
        assert sol.converged
        np.testing.assert_allclose(sol.theta, REGRESSION_THETA, atol=0.15)

    def test_divergence_detected(self):
        mdp, trajs, _ = regression_instance()
        with pytest.raises(DivergenceDetected):
            fit(mdp, trajs, SolverConfig(learning_rate=1e5, divergence_bound=10.0))

    def test_unknown_method_and_short_horizon(self):
        mdp, trajs, _ = regression_instance()
        with pytest.raises(ValueError):
            fit(mdp, trajs, SolverConfig(method="newton"))
        with pytest.raises(ValueError):
            fit(mdp, trajs, SolverConfig(horizon=3))

    def test_longer_horizon_override(self):
        mdp, trajs, _ = regression_instance()
        sol = fit(mdp, trajs, SolverConfig(method="lbfgs", horizon=8))
        assert sol.horizon == 8 and abs(sol.visitation.sum() - 8) < 1e-6

    def test_config_round_trip(self):
        cfg = SolverConfig(method="lbfgs", learning_rate=0.1, horizon=7, theta_init=(1, 2, 3, 4))
        assert SolverConfig.from_dict(cfg.to_dict()) == cfg


def test_sampler_matches_path_distribution(rng):
    m = random_mdp(rng, 2, 2)
    theta = rng.uniform(-1, 1, 4)
    T, n = 3, 100_000
    trajs = sample_trajectories(m, backward_pass(m, theta, T), n, rng)
    counts = {}
    for t in trajs:
        key = (tuple(t.states.tolist()), tuple(t.actions.tolist()))
        counts[key] = counts.get(key, 0) + 1
    r = m.feature_matrix @ theta
    for s0 in range(2):
        for key, p in path_distribution(m.transitions, r, s0, T).items():
            p *= m.start_distribution[s0]
            se = math.sqrt(p * (1 - p) / n)
            assert abs(counts.get(key, 0) / n - p) < 4 * se + 1e-12
