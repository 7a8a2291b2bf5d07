"""
Numerical checks of the inequalities and identities the algorithm relies on.

Every checker returns a CheckResult whose slack is the claimed bound minus
the measured quantity, so a check passes iff slack >= -tolerance and the
margin of a pass is visible. run_suite() builds the default instances for
each suite from a seed.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional

import numpy as np
from scipy.special import rel_entr

from .exact import (
    c_lambda,
    exact_gradient,
    optimal_reg_values,
    pl_coefficient,
    q_value_bound,
    reg_objective,
    reg_values,
    soft_pdl_sides,
)
from .mdp import TabularMdp, make_synthetic, occupancy_distance_bound
from .modes import CheckSuite
from .policy import Logits, Policy, Tau, logits_from_policy, project_policy, random_policy, softmax_policy, tau_lambda
from .sampling import (
    actor_bias_variance,
    actor_dist,
    critic_estimator_second_moment,
    deterministic_td_operator,
    expected_actor_grad,
    extended_kernel,
    state_action_weights,
)
from .trainer import CriticState, actor_step

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-9
FD_TOLERANCE = 1e-5


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    return value


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one check; passed iff slack >= -tolerance (or skipped)."""

    name: str
    passed: bool
    slack: float
    tolerance: float
    witness: dict[str, Any] = field(default_factory=dict)
    skipped: bool = False

    @classmethod
    def from_slack(cls, name: str, slack: float, tolerance: float = DEFAULT_TOLERANCE,
                   witness: Optional[dict[str, Any]] = None) -> CheckResult:
        slack = float(slack)
        return cls(name=name, passed=bool(slack >= -tolerance), slack=slack, tolerance=tolerance,
                   witness=witness or {})

    @classmethod
    def skip(cls, name: str, reason: str) -> CheckResult:
        return cls(name=name, passed=True, slack=0.0, tolerance=0.0, witness={"reason": reason}, skipped=True)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "skipped": self.skipped,
            "slack": _jsonable(self.slack),
            "tolerance": self.tolerance,
            "witness": _jsonable(self.witness),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def worst(name: str, results: Iterable[CheckResult]) -> CheckResult:
    """Fold many results of one check into the one with the smallest slack."""
    results = list(results)
    active = [r for r in results if not r.skipped]
    if not active:
        return results[0] if results else CheckResult.skip(name, "no instances")
    lowest = min(active, key=lambda r: r.slack)
    witness = dict(lowest.witness)
    witness["instances"] = len(results)
    witness["failures"] = sum(not r.passed for r in active)
    return CheckResult(name=name, passed=all(r.passed for r in active), slack=lowest.slack,
                       tolerance=lowest.tolerance, witness=witness)


def finite_diff_gradient(mdp: TabularMdp, theta: Logits, lam: float, h: float = 1e-5) -> np.ndarray:
    """Central differences of theta -> J(softmax(theta)), coordinate by coordinate."""
    if not h > 0.0:
        raise ValueError(f"h must be positive, got {h!r}")
    grad = np.zeros(theta.shape)
    base = theta.theta
    for index in np.ndindex(*theta.shape):
        plus = np.array(base)
        minus = np.array(base)
        plus[index] += h
        minus[index] -= h
        j_plus = reg_objective(mdp, softmax_policy(Logits(plus)), lam)
        j_minus = reg_objective(mdp, softmax_policy(Logits(minus)), lam)
        grad[index] = (j_plus - j_minus) / (2.0 * h)
    return grad


def check_gradient(mdp: TabularMdp, theta: Logits, lam: float, h: float = 1e-5,
                   tolerance: float = FD_TOLERANCE) -> CheckResult:
    """Relative sup-norm error of the exact gradient against finite differences."""
    exact = exact_gradient(mdp, theta, lam)
    approx = finite_diff_gradient(mdp, theta, lam, h)
    error = float(np.abs(approx - exact).max()) / max(float(np.abs(exact).max()), 1e-8)
    return CheckResult.from_slack("gradient", -error, tolerance, {"theta": theta.theta, "relative_error": error})


def check_unbiasedness(mdp: TabularMdp, theta: Logits, lam: float, tolerance: float = 1e-12) -> CheckResult:
    """The actor estimator with the exact advantage has mean equal to the gradient."""
    adv = reg_values(mdp, softmax_policy(theta), lam).adv
    error = float(np.abs(expected_actor_grad(mdp, theta, adv) - exact_gradient(mdp, theta, lam)).max())
    return CheckResult.from_slack("unbiasedness", -error, tolerance, {"theta": theta.theta})


def check_actor_variance(mdp: TabularMdp, theta: Logits, lam: float, tolerance: float = 1e-10) -> CheckResult:
    """
    E||g_a - grad||^2 <= ||grad||^2 / ((1 - gamma) pi_min rho_min) for the
    estimator built on the exact advantage.
    """
    if mdp.rho_min <= 0.0:
        raise ValueError("variance check needs rho_min > 0")
    policy = softmax_policy(theta)
    adv = reg_values(mdp, policy, lam).adv
    lhs = actor_bias_variance(mdp, theta, adv, lam).mse_to_gradient
    gradient = exact_gradient(mdp, theta, lam)
    rhs = float(np.sum(gradient * gradient)) / ((1.0 - mdp.gamma) * policy.min_prob * mdp.rho_min)
    return CheckResult.from_slack("actor_variance", rhs - lhs, tolerance,
                                  {"theta": theta.theta, "lhs": lhs, "rhs": rhs})


def check_pl(mdp: TabularMdp, theta: Logits, lam: float, j_star: Optional[float] = None,
             tolerance: float = DEFAULT_TOLERANCE) -> CheckResult:
    """||grad||^2 >= mu(theta) (J* - J(theta)), and J(theta) <= J*."""
    if j_star is None:
        j_star = optimal_reg_values(mdp, lam).j_star
    objective = reg_objective(mdp, softmax_policy(theta), lam)
    gap = j_star - objective
    witness = {"theta": theta.theta, "gap": gap}
    if gap < -tolerance:
        return CheckResult.from_slack("pl", gap, tolerance, witness)
    gradient = exact_gradient(mdp, theta, lam)
    slack = float(np.sum(gradient * gradient)) - pl_coefficient(mdp, theta, lam) * max(gap, 0.0)
    return CheckResult.from_slack("pl", slack, tolerance, witness)


def contraction_factor(eta_c: float, gamma: float, rho_min: float, tau: float) -> float:
    return 1.0 - eta_c * (1.0 - gamma) ** 2 * rho_min * tau + eta_c * eta_c * (1.0 + gamma) ** 2


def check_contraction(mdp: TabularMdp, theta: Logits, q: np.ndarray, lam: float, eta_c: float,
                      tau: Optional[float] = None, tolerance: float = 1e-10) -> CheckResult:
    """
    ||q~ - Bq||^2 <= (1 - eta_c (1-gamma)^2 rho_min tau + eta_c^2 (1+gamma)^2) ||q~ - q||^2
    for the expected critic step B, with tau defaulting to the policy's
    smallest probability.
    """
    policy = softmax_policy(theta)
    tau = policy.min_prob if tau is None else tau
    target = reg_values(mdp, policy, lam).q
    stepped = deterministic_td_operator(mdp, theta, q, lam, eta_c)
    factor = contraction_factor(eta_c, mdp.gamma, mdp.rho_min, tau)
    before = float(np.sum((target - q) ** 2))
    after = float(np.sum((target - stepped) ** 2))
    return CheckResult.from_slack("contraction", factor * before - after, tolerance,
                                  {"q": q, "eta_c": eta_c, "factor": factor})


def check_monotone_operator(mdp: TabularMdp, theta: Logits, v: np.ndarray, tolerance: float = 1e-10) -> CheckResult:
    """<D (I - gamma P~) v, v> >= (1/2) (1-gamma)^2 rho_min pi_min ||v||^2."""
    if mdp.rho_min <= 0.0:
        raise ValueError("monotone-operator check needs rho_min > 0")
    policy = softmax_policy(theta)
    flat = np.asarray(v, dtype=np.float64).ravel()
    weights = np.diag(state_action_weights(mdp, policy))
    operator = weights @ (np.eye(flat.size) - mdp.gamma * extended_kernel(mdp, policy))
    lhs = float(flat @ operator @ flat)
    rhs = 0.5 * (1.0 - mdp.gamma) ** 2 * mdp.rho_min * policy.min_prob * float(flat @ flat)
    return CheckResult.from_slack("monotone_operator", lhs - rhs, tolerance, {"v": flat, "lhs": lhs, "rhs": rhs})


def check_critic_variance(mdp: TabularMdp, theta: Logits, q: np.ndarray, lam: float,
                          tolerance: float = DEFAULT_TOLERANCE) -> CheckResult:
    variance, bound = critic_estimator_second_moment(mdp, theta, q, lam)
    return CheckResult.from_slack("critic_variance", bound - variance, tolerance,
                                  {"theta": theta.theta, "q": q, "variance": variance, "bound": bound})


def check_improvement(mdp: TabularMdp, pi: Policy, lam: float, rng: np.random.Generator,
                      tolerance: float = 1e-12, require_projection: bool = False) -> CheckResult:
    """
    J(U(pi)) >= J(pi) for the projection at the improvement floor tau_lambda.

    With require_projection, a pi the projection leaves unchanged fails
    instead of passing with zero slack.
    """
    tau = tau_lambda(mdp, lam)
    if not tau.is_active:
        return CheckResult.skip("improvement", f"tau_lambda underflows (log tau = {tau.log_tau:.6g})")
    improved = project_policy(pi, tau, rng)
    if require_projection and np.array_equal(improved.probs, pi.probs):
        return CheckResult(name="improvement", passed=False, slack=0.0, tolerance=tolerance,
                           witness={"pi": pi.probs, "log_tau": tau.log_tau, "reason": "projection left pi unchanged"})
    slack = reg_objective(mdp, improved, lam) - reg_objective(mdp, pi, lam)
    return CheckResult.from_slack("improvement", slack, tolerance, {"pi": pi.probs, "log_tau": tau.log_tau})


def check_projection_l1(pi: Policy, tau: float, n_trials: int, rng: np.random.Generator,
                        tolerance: float = 1e-12) -> CheckResult:
    """
    Row by row, no policy with every entry >= tau is closer to pi in L1
    than the projection of pi.
    """
    projected = project_policy(pi, Tau.fixed(tau), rng)
    moved = np.abs(pi.probs - projected.probs).sum(axis=1)
    n_states, n_actions = pi.shape
    slack = math.inf
    witness: dict[str, Any] = {"pi": pi.probs, "tau": tau}
    candidates = [projected] + [random_policy(n_states, n_actions, rng, floor=tau) for _ in range(n_trials)]
    for other in candidates:
        gaps = np.abs(pi.probs - other.probs).sum(axis=1) - moved
        if gaps.min() < slack:
            slack = float(gaps.min())
            witness["closest"] = other.probs
    return CheckResult.from_slack("projection_l1", slack, tolerance, witness)


def check_projection_invariants(pi: Policy, tau: float, rng: np.random.Generator,
                                tolerance: float = 1e-15) -> CheckResult:
    """Projected rows keep their mass, reach the floor and are a fixed point of the projection."""
    floor = Tau.fixed(tau)
    once = project_policy(pi, floor, rng)
    twice = project_policy(once, floor, rng)
    violation = max(
        float(np.abs(once.probs.sum(axis=1) - pi.probs.sum(axis=1)).max()),
        max(0.0, tau - once.min_prob),
        float(np.abs(twice.probs - once.probs).max()),
    )
    return CheckResult.from_slack("projection_invariants", -violation, tolerance, {"pi": pi.probs, "tau": tau})


def check_q_drift(mdp: TabularMdp, theta: Logits, lam: float, eta_a: float, tau: Tau, rng: np.random.Generator,
                  tolerance: float = DEFAULT_TOLERANCE) -> CheckResult:
    """
    One projected actor step driven by the exact advantage moves the exact
    Q-function by at most sqrt(|S||A|) C_lambda eta_a |adv(s, a)| in L2.
    """
    if not tau.is_active:
        raise ValueError("Q-drift check needs a representable tau")
    policy = softmax_policy(theta)
    values = reg_values(mdp, policy, lam)
    critic = CriticState(q_hat=values.q, v_hat=values.v, adv_hat=values.adv)
    sample = actor_dist(mdp, theta).sample(rng)
    stepped = actor_step(theta, sample, critic, eta_a, tau, rng, mdp.gamma)
    lhs = float(np.linalg.norm(reg_values(mdp, softmax_policy(stepped), lam).q - values.q))
    c_tilde = math.sqrt(mdp.n_states * mdp.n_actions) * c_lambda(lam, mdp.gamma, mdp.n_actions, tau.tau)
    rhs = c_tilde * eta_a * abs(float(values.adv[sample]))
    return CheckResult.from_slack("q_drift", rhs - lhs, tolerance,
                                  {"theta": theta.theta, "sample": list(sample), "lhs": lhs, "rhs": rhs})


def check_soft_pdl(mdp: TabularMdp, pi1: Policy, pi2: Policy, lam: float, s: int,
                   tolerance: float = 1e-8) -> CheckResult:
    lhs, rhs = soft_pdl_sides(mdp, pi1, pi2, lam, s)
    return CheckResult.from_slack("soft_pdl", -abs(lhs - rhs), tolerance, {"s": s, "lhs": lhs, "rhs": rhs})


def check_occupancy_distance(mdp: TabularMdp, pi1: Policy, pi2: Policy, tolerance: float = 1e-10) -> CheckResult:
    lhs, rhs = occupancy_distance_bound(mdp, pi1, pi2)
    return CheckResult.from_slack("occupancy_distance", rhs - lhs, tolerance, {"lhs": lhs, "rhs": rhs})


def _simplex(rng: np.random.Generator, n: int) -> np.ndarray:
    weights = rng.standard_exponential(n)
    return weights / weights.sum()


def check_aux_inequalities(seed: int, n: int = 10_000, tolerance: float = 1e-12) -> list[CheckResult]:
    """
    Pinsker, the KL upper bound, the KL-logit bound, the p log^2 p bound and
    the regularized Q-value bound, each on n random instances.
    """
    rng = np.random.default_rng(seed)
    pinsker, kl_upper, kl_logit, entropy_sq, q_bound = [], [], [], [], []
    for i in range(n):
        size = int(rng.integers(2, 7))
        p = _simplex(rng, size)
        q = p if i == 0 else _simplex(rng, size)
        kl = float(rel_entr(p, q).sum())
        l1 = float(np.abs(p - q).sum())
        pinsker.append(math.sqrt(max(kl, 0.0) / 2.0) - l1 / 2.0)
        kl_upper.append(l1 / float(q.min()) - kl)

        theta = rng.normal(scale=3.0, size=size)
        shift = float(rng.normal())
        theta_prime = theta + shift if i == 0 else rng.normal(scale=3.0, size=size)
        c = shift if i == 0 else float(rng.normal())
        log_p = theta - np.logaddexp.reduce(theta)
        log_q = theta_prime - np.logaddexp.reduce(theta_prime)
        kl_softmax = float(np.sum(np.exp(log_p) * (log_p - log_q)))
        kl_logit.append(0.5 * float(np.abs(theta - theta_prime - c).max()) ** 2 - kl_softmax)

        entropy_sq.append(1.0 + math.log(size) ** 2 - float(np.sum(np.where(p > 0, p * np.log(p) ** 2, 0.0))))

    for i in range(n):
        n_states, n_actions = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        gamma = float(rng.uniform(0.0, 0.95))
        lam = float(rng.uniform(0.0, 2.0))
        mdp = make_synthetic(n_states, n_actions, gamma, seed * 1_000_003 + i)
        policy = random_policy(n_states, n_actions, rng)
        q = reg_values(mdp, policy, lam).q
        q_bound.append(q_value_bound(lam, gamma, n_actions) - float(np.abs(q).max()))

    def fold(name: str, slacks: list[float]) -> CheckResult:
        index = int(np.argmin(slacks))
        failures = sum(s < -tolerance for s in slacks)
        return CheckResult(name=name, passed=failures == 0, slack=float(slacks[index]), tolerance=tolerance,
                           witness={"instance": index, "instances": len(slacks), "failures": failures})

    return [
        fold("pinsker", pinsker),
        fold("kl_upper", kl_upper),
        fold("kl_logit", kl_logit),
        fold("entropy_squared", entropy_sq),
        fold("q_value_bound", q_bound),
    ]


def _random_logits(rng: np.random.Generator, n_states: int, n_actions: int, scale: float = 3.0) -> Logits:
    return Logits(rng.uniform(-scale, scale, size=(n_states, n_actions)))


def _gradient_suite(seed: int) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    results.append(worst("gradient", (
        check_gradient(make_synthetic(5, 3, 0.9, seed + i), Logits(rng.normal(size=(5, 3))), 0.1)
        for i in range(10))))
    results.append(worst("unbiasedness", (
        check_unbiasedness(make_synthetic(4, 3, 0.9, seed + i), Logits(rng.normal(size=(4, 3))), 0.1)
        for i in range(20))))

    mdp = make_synthetic(3, 2, 0.9, seed)
    j_star = optimal_reg_values(mdp, 0.1).j_star
    pl = [check_pl(mdp, _random_logits(rng, 3, 2), 0.1, j_star) for _ in range(1000)]
    pl.append(check_pl(mdp, logits_from_policy(optimal_reg_values(mdp, 0.1).pi_star), 0.1, j_star))
    results.append(worst("pl", pl))

    pdl = []
    for i in range(50):
        pdl_mdp = make_synthetic(3, 2, 0.9, seed + 100 + i)
        pi1, pi2 = random_policy(3, 2, rng), random_policy(3, 2, rng)
        pdl.append(check_soft_pdl(pdl_mdp, pi1, pi2, float(rng.uniform(0.0, 1.0)), int(rng.integers(3))))
    results.append(worst("soft_pdl", pdl))
    results.append(worst("occupancy_distance", (
        check_occupancy_distance(make_synthetic(3, 2, 0.9, seed + 200 + i), random_policy(3, 2, rng),
                                 random_policy(3, 2, rng))
        for i in range(20))))
    return results


def _variance_suite(seed: int) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    mdp = make_synthetic(3, 2, 0.9, seed)
    lam = 0.1
    results = [worst("actor_variance", (check_actor_variance(mdp, _random_logits(rng, 3, 2), lam)
                                        for _ in range(100)))]
    bound = q_value_bound(lam, mdp.gamma, mdp.n_actions)
    results.append(worst("critic_variance", (
        check_critic_variance(mdp, _random_logits(rng, 3, 2), rng.uniform(-bound, bound, size=(3, 2)), lam)
        for _ in range(100))))
    return results


def _contraction_suite(seed: int) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    mdp = make_synthetic(3, 2, 0.9, seed)
    lam = 0.1
    theta = Logits.zeros(3, 2)
    tau = softmax_policy(theta).min_prob
    eta_c = (1.0 - mdp.gamma) ** 2 * mdp.rho_min * tau / 40.0
    results = [worst("contraction", (
        check_contraction(mdp, theta, rng.normal(scale=5.0, size=(3, 2)), lam, eta_c, tau) for _ in range(100)))]
    results.append(worst("monotone_operator", (
        check_monotone_operator(mdp, _random_logits(rng, 3, 2, scale=1.0), rng.normal(size=(3, 2)))
        for _ in range(200))))
    return results


def _shrink_entry(probs: np.ndarray, s: int, a: int, value: float) -> None:
    probs[s, a] = value
    others = [b for b in range(probs.shape[1]) if b != a]
    probs[s, others] *= (1.0 - value) / probs[s, others].sum()


def _adversarial_policy(rng: np.random.Generator, n_states: int, n_actions: int, below: float = 0.0) -> Policy:
    """Random policy with tiny entries; with below > 0 one entry always sits under that value."""
    probs = random_policy(n_states, n_actions, rng).probs.copy()
    for s in range(n_states):
        if rng.random() < 0.75:
            _shrink_entry(probs, s, int(rng.integers(n_actions)), 10.0 ** -rng.uniform(20.0, 40.0))
    if below > 0.0:
        _shrink_entry(probs, int(rng.integers(n_states)), int(rng.integers(n_actions)),
                      below * 10.0 ** -rng.uniform(1.0, 5.0))
    return Policy.from_probs(probs / probs.sum(axis=1, keepdims=True))


def _projection_suite(seed: int) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    rows = [[0.005, 0.995], [0.5, 0.5], [0.004, 0.006, 0.99]]
    l1, invariants = [], []
    for row in rows:
        policy = Policy.from_probs(np.array([row]))
        l1.append(check_projection_l1(policy, 0.01, 1000, rng))
        invariants.append(check_projection_invariants(policy, 0.01, rng))
    for _ in range(50):
        policy = _adversarial_policy(rng, 3, 3)
        invariants.append(check_projection_invariants(policy, 0.02, rng))
        l1.append(check_projection_l1(policy, 0.02, 200, rng))
    results = [worst("projection_l1", l1), worst("projection_invariants", invariants)]

    # improvement floor is representable only for small gamma and large lambda
    improvement_mdp = make_synthetic(2, 2, 0.5, seed)
    lam = 2.0
    tau = tau_lambda(improvement_mdp, lam)
    results.append(worst("improvement", (
        check_improvement(improvement_mdp, _adversarial_policy(rng, 2, 2, below=tau.tau), lam, rng,
                          require_projection=True)
        for _ in range(100))))
    results.append(worst("q_drift", (
        check_q_drift(improvement_mdp, _random_logits(rng, 2, 2), lam, 0.1, tau, rng) for _ in range(100))))
    return results


SUITES: dict[CheckSuite, Callable[[int], list[CheckResult]]] = {
    CheckSuite.GRADIENTS: _gradient_suite,
    CheckSuite.VARIANCE: _variance_suite,
    CheckSuite.CONTRACTION: _contraction_suite,
    CheckSuite.PROJECTION: _projection_suite,
    CheckSuite.AUX: check_aux_inequalities,
}


def run_suite(suite: CheckSuite | str, seed: int = 0) -> list[CheckResult]:
    """Run one suite (or all of them) on the default instances for seed."""
    suite = CheckSuite(suite)
    selected = list(SUITES) if suite is CheckSuite.ALL else [suite]
    results: list[CheckResult] = []
    for name in selected:
        found = SUITES[name](seed)
        failed = [r.name for r in found if not r.passed]
        if failed:
            logger.warning("suite %s: failed checks %s", name.value, ", ".join(failed))
        results.extend(found)
    return results
