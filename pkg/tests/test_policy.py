"""
Unit and property tests for softmax policies, tau_lambda and the projection.
"""

import math
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from entac.mdp import make_gridworld, make_synthetic
from entac.modes import InitMode
from entac.policy import (
    Logits,
    Policy,
    Tau,
    logits_from_policy,
    project_logits,
    project_policy,
    random_policy,
    softmax_policy,
    tau_lambda,
)

logit_matrices = st.tuples(st.integers(1, 4), st.integers(2, 5)).flatmap(
    lambda shape: st.lists(st.floats(min_value=-50.0, max_value=50.0, allow_nan=False),
                           min_size=shape[0] * shape[1], max_size=shape[0] * shape[1])
    .map(lambda values: np.array(values).reshape(shape)))

simplex_weights = st.lists(st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=2, max_size=5).filter(
    lambda w: sum(w) > 1e-3)


def simplex_row(weights: list[float]) -> np.ndarray:
    row = np.array(weights)
    return row / row.sum()


class TestSoftmax(unittest.TestCase):
    """Test cases for softmax_policy() and logits_from_policy()."""

    def test_zero_logits_are_uniform(self):
        policy = softmax_policy(Logits.zeros(3, 4))
        np.testing.assert_allclose(policy.probs, np.full((3, 4), 0.25))

    def test_large_logits_do_not_overflow(self):
        policy = softmax_policy(Logits(np.array([[1000.0, 0.0]])))
        self.assertTrue(np.isfinite(policy.log_probs).all())
        self.assertAlmostEqual(float(policy.log_probs[0, 1]), -1000.0, delta=1e-9)
        self.assertEqual(float(policy.probs[0, 0]), 1.0)

    def test_round_trip_up_to_row_shift(self):
        theta = Logits(np.array([[1.0, 2.0, 3.0], [0.0, -1.0, 5.0]]))
        again = logits_from_policy(softmax_policy(theta))
        shift = theta.theta - again.theta
        np.testing.assert_allclose(shift - shift[:, :1], 0.0, atol=1e-12)

    def test_logits_from_policy_rejects_zeros(self):
        with self.assertRaises(ValueError):
            logits_from_policy(Policy.from_probs(np.array([[1.0, 0.0]])))

    def test_non_finite_logits_rejected(self):
        with self.assertRaises(ValueError):
            Logits(np.array([[0.0, np.inf]]))

    @given(logit_matrices)
    def test_rows_are_distributions(self, matrix):
        policy = softmax_policy(Logits(matrix))
        np.testing.assert_allclose(policy.probs.sum(axis=1), 1.0, atol=1e-12)
        self.assertTrue(np.isfinite(policy.log_probs).all())
        self.assertTrue((policy.probs > 0.0).all())


class TestTauLambda(unittest.TestCase):
    """Test cases for tau_lambda()."""

    def test_representable_regime(self):
        tau = tau_lambda(make_synthetic(2, 2, 0.5, seed=0), 2.0)
        expected = -math.log(3.0) - (16.0 + 8.0 * 0.5 * 2.0 * math.log(2.0)) / (2.0 * 0.25 * 0.5)
        self.assertAlmostEqual(tau.log_tau, expected, delta=1e-12)
        self.assertAlmostEqual(tau.log_tau, -87.28, delta=0.01)
        self.assertTrue(tau.is_active)

    def test_long_horizon_regime_underflows(self):
        tau = tau_lambda(make_gridworld(2, 2, 0.99, InitMode.UNIFORM), 0.05)
        self.assertEqual(tau.tau, 0.0)
        self.assertFalse(tau.is_active)
        self.assertTrue(math.isfinite(tau.log_tau))

    def test_zero_rho_min_disables(self):
        tau = tau_lambda(make_gridworld(2, 2, 0.99), 0.05)
        self.assertEqual(tau.log_tau, -math.inf)
        self.assertFalse(tau.is_active)

    def test_invalid_lambda(self):
        with self.assertRaises(ValueError):
            tau_lambda(make_synthetic(2, 2, 0.5, seed=0), 0.0)

    def test_never_above_cap(self):
        # the second branch bounds log tau for any lambda
        tau = tau_lambda(make_synthetic(2, 2, 0.5, seed=0), 1e9)
        self.assertLessEqual(tau.log_tau, -8.0 * math.log(3.0) - 4.0 * math.log(2.0) + 1e-12)


class TestProjection(unittest.TestCase):
    """Test cases for project_policy() and project_logits()."""

    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_example_row(self):
        policy = Policy.from_probs(np.array([[0.005, 0.995]]))
        projected = project_policy(policy, Tau.fixed(0.01), self.rng)
        np.testing.assert_allclose(projected.probs, [[0.01, 0.99]], atol=1e-15)

    def test_three_action_example_hits_floor_exactly(self):
        policy = Policy.from_probs(np.array([[0.004, 0.006, 0.99]]))
        projected = project_policy(policy, Tau.fixed(0.01), self.rng)
        self.assertEqual(float(projected.probs[0, 0]), 0.01)
        self.assertEqual(float(projected.probs[0, 1]), 0.01)
        self.assertAlmostEqual(float(projected.probs[0, 2]), 0.98, delta=1e-15)

    def test_fixed_tau_is_stored_exactly(self):
        tau = Tau.fixed(0.01171875)
        self.assertEqual(tau.tau, 0.01171875)
        self.assertEqual(tau.log_tau, math.log(0.01171875))
        projected = project_policy(Policy.from_probs(np.array([[0.0, 1.0]])), tau, self.rng)
        self.assertEqual(projected.min_prob, 0.01171875)

    def test_tau_from_log(self):
        self.assertEqual(Tau.from_log(math.log(0.25)).tau, math.exp(math.log(0.25)))
        self.assertEqual(Tau.from_log(-1e7).tau, 0.0)
        self.assertFalse(Tau.from_log(-1e7).is_active)
        self.assertEqual(Tau.from_log(-math.inf), Tau.disabled())

    def test_entry_at_floor_is_not_reprojected(self):
        policy = Policy.from_probs(np.array([[0.01, 0.495, 0.495]]))
        state = self.rng.bit_generator.state
        self.assertIs(project_policy(policy, Tau.fixed(0.01), self.rng), policy)
        self.assertEqual(self.rng.bit_generator.state, state)

    def test_untouched_rows_are_identical(self):
        policy = Policy.from_probs(np.array([[0.3, 0.7], [0.001, 0.999]]))
        projected = project_policy(policy, Tau.fixed(0.01), self.rng)
        np.testing.assert_array_equal(projected.probs[0], policy.probs[0])
        np.testing.assert_array_equal(projected.log_probs[0], policy.log_probs[0])

    def test_disabled_is_identity(self):
        policy = Policy.from_probs(np.array([[0.0, 1.0]]))
        self.assertIs(project_policy(policy, Tau.disabled(), self.rng), policy)

    def test_tau_too_large(self):
        policy = Policy.uniform(1, 3)
        with self.assertRaises(ValueError):
            project_policy(policy, Tau.fixed(0.1), self.rng)

    def test_tie_break_is_seeded(self):
        policy = Policy.from_probs(np.array([[0.001, 0.4995, 0.4995]]))
        first = project_policy(policy, Tau.fixed(0.01), np.random.default_rng(3))
        second = project_policy(policy, Tau.fixed(0.01), np.random.default_rng(3))
        np.testing.assert_array_equal(first.probs, second.probs)
        self.assertAlmostEqual(float(first.probs.sum()), 1.0, delta=1e-15)

    def test_project_logits_matches_policy(self):
        theta = Logits(np.array([[0.0, -10.0, 2.0], [0.0, 0.0, 0.0]]))
        tau = Tau.fixed(0.02)
        projected = softmax_policy(project_logits(theta, tau, self.rng))
        self.assertGreaterEqual(projected.min_prob, 0.02 - 1e-15)
        np.testing.assert_allclose(projected.probs[1], np.full(3, 1 / 3))

    def test_project_logits_noop_returns_same_object(self):
        theta = Logits.zeros(2, 2)
        self.assertIs(project_logits(theta, Tau.fixed(0.01), self.rng), theta)

    @settings(max_examples=200)
    @given(simplex_weights, st.floats(min_value=1e-6, max_value=0.019))
    def test_invariants(self, weights, tau_value):
        row = simplex_row(weights)
        if tau_value >= 1.0 / (2 * row.size ** 2):
            return
        policy = Policy.from_probs(row[None, :])
        tau = Tau.fixed(tau_value)
        once = project_policy(policy, tau, self.rng)
        twice = project_policy(once, tau, self.rng)

        self.assertAlmostEqual(float(once.probs.sum()), 1.0, delta=1e-14)
        self.assertGreaterEqual(once.min_prob, tau_value)
        np.testing.assert_array_equal(twice.probs, once.probs)

    @settings(max_examples=100)
    @given(simplex_weights)
    def test_l1_optimal_against_floor_members(self, weights):
        row = simplex_row(weights)
        tau_value = 0.5 / (2 * row.size ** 2)
        policy = Policy.from_probs(row[None, :])
        projected = project_policy(policy, Tau.fixed(tau_value), self.rng)
        moved = float(np.abs(projected.probs - policy.probs).sum())
        for other in (random_policy(1, row.size, self.rng, floor=tau_value) for _ in range(20)):
            self.assertGreaterEqual(float(np.abs(other.probs - policy.probs).sum()), moved - 1e-12)


class TestRandomPolicy(unittest.TestCase):
    """Test cases for random_policy()."""

    def test_floor(self):
        policy = random_policy(5, 3, np.random.default_rng(1), floor=0.05)
        self.assertGreaterEqual(policy.min_prob, 0.05 - 1e-15)
        np.testing.assert_allclose(policy.probs.sum(axis=1), 1.0, atol=1e-12)

    def test_infeasible_floor(self):
        with self.assertRaises(ValueError):
            random_policy(1, 4, np.random.default_rng(1), floor=0.25)


if __name__ == "__main__":
    unittest.main()
