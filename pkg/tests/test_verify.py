"""
Unit tests for the numerical checks and the check suites.
"""

import json
import math
import unittest

import numpy as np

from entac.exact import exact_gradient, optimal_reg_values
from entac.mdp import make_gridworld, make_synthetic
from entac.modes import CheckSuite
from entac.policy import Logits, Policy, Tau, logits_from_policy, random_policy
from entac.verify import (
    CheckResult,
    check_actor_variance,
    check_aux_inequalities,
    check_contraction,
    check_gradient,
    check_improvement,
    check_monotone_operator,
    check_pl,
    check_projection_invariants,
    check_projection_l1,
    check_q_drift,
    finite_diff_gradient,
    run_suite,
    worst,
)


class TestCheckResult(unittest.TestCase):
    """Test cases for CheckResult and worst()."""

    def test_tolerance_boundary(self):
        self.assertTrue(CheckResult.from_slack("x", -1e-10, 1e-9).passed)
        self.assertFalse(CheckResult.from_slack("x", -1e-8, 1e-9).passed)
        self.assertTrue(CheckResult.from_slack("x", 3.0).passed)

    def test_skip(self):
        result = CheckResult.skip("improvement", "tau underflows")
        self.assertTrue(result.passed)
        self.assertTrue(result.skipped)
        self.assertEqual(result.witness["reason"], "tau underflows")

    def test_json_line(self):
        result = CheckResult.from_slack("q_drift", math.inf, witness={"theta": np.zeros((1, 2)), "k": np.int64(3)})
        document = json.loads(result.to_json())
        self.assertEqual(document["slack"], "inf")
        self.assertEqual(document["witness"], {"theta": [[0.0, 0.0]], "k": 3})
        self.assertEqual(document["name"], "q_drift")

    def test_worst_keeps_smallest_slack(self):
        results = [CheckResult.from_slack("a", 1.0), CheckResult.from_slack("a", -1.0),
                   CheckResult.skip("a", "n/a")]
        folded = worst("a", results)
        self.assertFalse(folded.passed)
        self.assertEqual(folded.slack, -1.0)
        self.assertEqual(folded.witness["instances"], 3)
        self.assertEqual(folded.witness["failures"], 1)

    def test_worst_of_skips(self):
        self.assertTrue(worst("a", [CheckResult.skip("a", "n/a")]).skipped)
        self.assertTrue(worst("a", []).skipped)


class TestGradientChecks(unittest.TestCase):
    """Test cases for the gradient and PL checks."""

    def setUp(self):
        self.mdp = make_synthetic(3, 2, 0.9, seed=0)
        self.theta = Logits(np.random.default_rng(0).normal(size=(3, 2)))

    def test_finite_differences_agree(self):
        approx = finite_diff_gradient(self.mdp, self.theta, 0.1)
        exact = exact_gradient(self.mdp, self.theta, 0.1)
        np.testing.assert_allclose(approx, exact, atol=1e-6 * float(np.abs(exact).max()))
        self.assertTrue(check_gradient(self.mdp, self.theta, 0.1).passed)

    def test_finite_differences_reject_bad_step(self):
        with self.assertRaises(ValueError):
            finite_diff_gradient(self.mdp, self.theta, 0.1, h=0.0)

    def test_pl_at_random_and_optimal_policies(self):
        optimal = optimal_reg_values(self.mdp, 0.1)
        self.assertTrue(check_pl(self.mdp, self.theta, 0.1, optimal.j_star).passed)
        at_optimum = check_pl(self.mdp, logits_from_policy(optimal.pi_star), 0.1, optimal.j_star)
        self.assertTrue(at_optimum.passed)
        self.assertLess(abs(at_optimum.witness["gap"]), 1e-9)

    def test_pl_flags_objective_above_optimum(self):
        result = check_pl(self.mdp, self.theta, 0.1, j_star=-100.0)
        self.assertFalse(result.passed)

    def test_actor_variance_needs_positive_rho(self):
        with self.assertRaises(ValueError):
            check_actor_variance(make_gridworld(2, 2, 0.9), Logits.zeros(4, 4), 0.1)
        self.assertTrue(check_actor_variance(self.mdp, self.theta, 0.1).passed)


class TestCriticChecks(unittest.TestCase):
    """Test cases for the critic operator checks."""

    def test_contraction_and_monotone_operator(self):
        mdp = make_synthetic(3, 2, 0.9, seed=1)
        rng = np.random.default_rng(1)
        theta = Logits.zeros(3, 2)
        eta_c = (1.0 - mdp.gamma) ** 2 * mdp.rho_min * 0.5 / 40.0
        for _ in range(20):
            self.assertTrue(check_contraction(mdp, theta, rng.normal(size=(3, 2)), 0.1, eta_c).passed)
            self.assertTrue(check_monotone_operator(mdp, theta, rng.normal(size=(3, 2))).passed)

    def test_zero_step_is_not_a_contraction_failure(self):
        mdp = make_synthetic(3, 2, 0.9, seed=1)
        result = check_contraction(mdp, Logits.zeros(3, 2), np.ones((3, 2)), 0.1, 0.0)
        self.assertTrue(result.passed)
        self.assertEqual(result.witness["factor"], 1.0)


class TestProjectionChecks(unittest.TestCase):
    """Test cases for the projection checks."""

    def setUp(self):
        self.rng = np.random.default_rng(2)

    def test_example_row(self):
        policy = Policy.from_probs(np.array([[0.005, 0.995]]))
        l1 = check_projection_l1(policy, 0.01, 200, self.rng)
        self.assertTrue(l1.passed)
        self.assertAlmostEqual(l1.slack, 0.0, delta=1e-15)
        self.assertTrue(check_projection_invariants(policy, 0.01, self.rng).passed)

    def test_improvement_skips_when_tau_underflows(self):
        mdp = make_gridworld(2, 2, 0.99)
        self.assertTrue(check_improvement(mdp, Policy.uniform(4, 4), 0.05, self.rng).skipped)

    def test_improvement_in_representable_regime(self):
        mdp = make_synthetic(2, 2, 0.5, seed=0)
        policy = Policy.from_probs(np.array([[1e-45, 1.0 - 1e-45], [0.3, 0.7]]))
        result = check_improvement(mdp, policy, 2.0, self.rng)
        self.assertFalse(result.skipped)
        self.assertTrue(result.passed)

    def test_improvement_can_require_a_projection(self):
        mdp = make_synthetic(2, 2, 0.5, seed=0)
        uniform = Policy.uniform(2, 2)
        self.assertTrue(check_improvement(mdp, uniform, 2.0, self.rng).passed)
        result = check_improvement(mdp, uniform, 2.0, self.rng, require_projection=True)
        self.assertFalse(result.passed)
        self.assertIn("unchanged", result.witness["reason"])

    def test_projection_suite_improvement_always_projects(self):
        improvement = {r.name: r for r in run_suite(CheckSuite.PROJECTION, seed=1)}["improvement"]
        self.assertFalse(improvement.skipped)
        self.assertTrue(improvement.passed, improvement.to_json())
        self.assertEqual(improvement.witness["instances"], 100)
        self.assertEqual(improvement.witness["failures"], 0)

    def test_q_drift_needs_active_tau(self):
        mdp = make_synthetic(2, 2, 0.5, seed=0)
        with self.assertRaises(ValueError):
            check_q_drift(mdp, Logits.zeros(2, 2), 2.0, 0.1, Tau.disabled(), self.rng)
        self.assertTrue(check_q_drift(mdp, Logits.zeros(2, 2), 2.0, 0.1, Tau.fixed(0.05), self.rng).passed)

    def test_random_floor_policies_are_feasible(self):
        policy = random_policy(3, 3, self.rng, floor=0.02)
        self.assertTrue(check_projection_invariants(policy, 0.02, self.rng).passed)


class TestSuites(unittest.TestCase):
    """Every suite passes on its default instances."""

    def test_aux_inequalities(self):
        results = check_aux_inequalities(seed=0, n=300)
        self.assertEqual([r.name for r in results],
                         ["pinsker", "kl_upper", "kl_logit", "entropy_squared", "q_value_bound"])
        for result in results:
            self.assertTrue(result.passed, result.to_json())
            self.assertEqual(result.witness["instances"], 300)

    def test_named_suites(self):
        expected = {
            CheckSuite.GRADIENTS: {"gradient", "unbiasedness", "pl", "soft_pdl", "occupancy_distance"},
            CheckSuite.VARIANCE: {"actor_variance", "critic_variance"},
            CheckSuite.CONTRACTION: {"contraction", "monotone_operator"},
            CheckSuite.PROJECTION: {"projection_l1", "projection_invariants", "improvement", "q_drift"},
        }
        for suite, names in expected.items():
            with self.subTest(suite=suite.value):
                results = run_suite(suite, seed=0)
                self.assertEqual({r.name for r in results}, names)
                for result in results:
                    self.assertTrue(result.passed, result.to_json())

    def test_suite_by_name(self):
        self.assertEqual({r.name for r in run_suite("variance", seed=1)}, {"actor_variance", "critic_variance"})
        with self.assertRaises(ValueError):
            run_suite("nonsense")


if __name__ == "__main__":
    unittest.main()
