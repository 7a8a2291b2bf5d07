"""
Exact regularized planning on tabular MDPs.

Policy evaluation is a dense direct solve; soft value iteration is the only
iterative loop. The closed-form constants used to describe step sizes and
inner-loop lengths are gathered in ConstantsReport.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

import numpy as np
from scipy import linalg
from scipy.special import logsumexp, rel_entr

from .mdp import RESIDUAL_WARN, TabularMdp, occupancy
from .policy import Logits, Policy, Tau, softmax_policy

logger = logging.getLogger(__name__)

MAX_SOFT_VI_ITERATIONS = 1_000_000


class ConvergenceError(RuntimeError):
    """Soft value iteration hit its iteration cap."""

    def __init__(self, iterations: int, residual: float):
        super().__init__(f"soft value iteration did not converge in {iterations} iterations "
                         f"(last sup-norm change {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class RegValues:
    """Regularized state values, Q-values and advantages of one policy."""

    v: np.ndarray
    q: np.ndarray
    adv: np.ndarray
    lam: float
    residual: float = 0.0


@dataclass(frozen=True)
class OptimalValues:
    v_star: np.ndarray
    q_star: np.ndarray
    pi_star: Policy
    j_star: float
    iterations: int
    residual: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "J_star": self.j_star,
            "v_star": self.v_star.tolist(),
            "pi_star": self.pi_star.probs.tolist(),
            "iterations": self.iterations,
            "residual": self.residual,
        }


@dataclass
class ConstantsReport:
    """
    Closed-form constants for one (MDP, lambda, tau, step sizes) setting.

    Descriptive only: nothing in a training run reads these values. Fields
    that are infinite or undefined (tau = 0, rho_min = 0) are set to inf and
    named in `degenerate`.
    """

    smoothness_L: float
    pl_floor_mu: float
    critic_mu: float
    critic_sigma_sq: float
    c_lambda: float
    c_tilde_lambda: float
    bias_B: float
    predicted_H_floor: float
    actor_step_cap: float
    critic_step_cap: float
    tuning_H_floor: float
    exact_critic_K_floor: float
    tau: float
    epsilon: float
    degenerate: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        """JSON-safe dict; non-finite numbers become None."""
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, float) and not math.isfinite(value):
                out[key] = None
        return out


def _entropy_weighted(policy: Policy) -> np.ndarray:
    """Elementwise pi * log pi with 0 log 0 = 0."""
    return np.where(policy.probs > 0.0, policy.probs * policy.log_probs, 0.0)


def reg_values(mdp: TabularMdp, policy: Policy, lam: float) -> RegValues:
    """
    Evaluate a policy under entropy regularization lam >= 0.

    v solves (I - gamma P_pi) v = r_pi with
    r_pi(s) = sum_a pi(a|s) (r(s,a) - lam log pi(a|s)), then
    q = r + gamma P v and adv = q - lam log pi - v.
    """
    if policy.shape != mdp.reward.shape:
        raise ValueError(f"policy shape {policy.shape} does not match MDP {mdp.reward.shape}")
    if lam < 0.0:
        raise ValueError(f"lambda must be nonnegative, got {lam!r}")

    r_pi = np.sum(policy.probs * mdp.reward, axis=1)
    if lam > 0.0:
        r_pi = r_pi - lam * _entropy_weighted(policy).sum(axis=1)
    system = np.eye(mdp.n_states) - mdp.gamma * mdp.policy_kernel(policy.probs)
    v = linalg.lu_solve(linalg.lu_factor(system), r_pi)
    residual = float(np.abs(system @ v - r_pi).max())
    if residual > RESIDUAL_WARN:
        logger.warning("policy evaluation residual %.3e exceeds %.0e", residual, RESIDUAL_WARN)

    q = mdp.reward + mdp.gamma * np.einsum("sat,t->sa", mdp.transition, v)
    adv = q - v[:, None]
    if lam > 0.0:
        adv = adv - lam * policy.log_probs
    return RegValues(v=v, q=q, adv=adv, lam=float(lam), residual=residual)


def reg_objective(mdp: TabularMdp, policy: Policy, lam: float) -> float:
    """J = sum_s rho(s) v(s)."""
    return float(mdp.init_dist @ reg_values(mdp, policy, lam).v)


def q_value_bound(lam: float, gamma: float, n_actions: int) -> float:
    """Sup-norm bound (1 + lam log|A|) / (1 - gamma) on regularized Q-values."""
    return (1.0 + lam * math.log(n_actions)) / (1.0 - gamma)


def optimal_reg_values(mdp: TabularMdp, lam: float, tol: float = 1e-12,
                       max_iterations: int = MAX_SOFT_VI_ITERATIONS) -> OptimalValues:
    """
    Soft value iteration V <- lam log sum_a exp((r + gamma P V) / lam).

    Stops once the sup-norm change is at most tol * (1 - gamma), or at a few
    ulps of |V| when that is larger, since float iterates can cycle there.

    Raises:
        ValueError: If lam <= 0
        ConvergenceError: If max_iterations is reached
    """
    if lam <= 0.0:
        raise ValueError(f"lambda must be positive for the optimal policy, got {lam!r}")
    threshold = tol * (1.0 - mdp.gamma)
    v = np.zeros(mdp.n_states)
    change = math.inf
    for iteration in range(1, max_iterations + 1):
        q = mdp.reward + mdp.gamma * np.einsum("sat,t->sa", mdp.transition, v)
        new_v = lam * logsumexp(q / lam, axis=1)
        change = float(np.abs(new_v - v).max())
        v = new_v
        if change <= max(threshold, 4.0 * np.finfo(float).eps * float(np.abs(v).max())):
            break
    else:
        raise ConvergenceError(max_iterations, change)

    q_star = mdp.reward + mdp.gamma * np.einsum("sat,t->sa", mdp.transition, v)
    pi_star = softmax_policy(Logits(q_star / lam))
    j_star = float(mdp.init_dist @ v)
    logger.debug("soft value iteration converged in %d iterations, J* = %.12g", iteration, j_star)
    return OptimalValues(v_star=v, q_star=q_star, pi_star=pi_star, j_star=j_star,
                         iterations=iteration, residual=change)


def exact_gradient(mdp: TabularMdp, theta: Logits, lam: float) -> np.ndarray:
    """d(s) pi(a|s) adv(s,a) / (1 - gamma), the gradient of the objective in theta."""
    policy = softmax_policy(theta)
    d = occupancy(mdp, policy).d
    adv = reg_values(mdp, policy, lam).adv
    return d[:, None] * policy.probs * adv / (1.0 - mdp.gamma)


def pl_coefficient(mdp: TabularMdp, theta: Logits, lam: float) -> float:
    """
    lam (1 - gamma) rho_min^2 (min pi)^2 / |S|.

    Raises:
        ValueError: If rho_min is 0
    """
    if mdp.rho_min <= 0.0:
        raise ValueError("gradient-domination coefficient needs rho_min > 0")
    min_prob = softmax_policy(theta).min_prob
    return lam * (1.0 - mdp.gamma) * mdp.rho_min ** 2 * min_prob ** 2 / mdp.n_states


def smoothness_L(lam: float, gamma: float, n_actions: int) -> float:
    """(8 + lam (4 + 8 log|A|)) / (1 - gamma)^3."""
    return (8.0 + lam * (4.0 + 8.0 * math.log(n_actions))) / (1.0 - gamma) ** 3


def c_lambda(lam: float, gamma: float, n_actions: int, tau: float) -> float:
    """
    Sup-norm Lipschitz constant of the Q-function along one projected actor
    step: (2 gamma / (1-gamma)) ((1 + lam log|A|)/(1-gamma) + lam log(1/tau) + lam / (2 tau)).
    Infinite when tau is 0.
    """
    if tau <= 0.0:
        return math.inf
    return (2.0 * gamma / (1.0 - gamma)) * ((1.0 + lam * math.log(n_actions)) / (1.0 - gamma)
                                           - lam * math.log(tau) + lam / (2.0 * tau))


def soft_pdl_sides(mdp: TabularMdp, pi1: Policy, pi2: Policy, lam: float, s: int) -> tuple[float, float]:
    """
    Both sides of the soft performance-difference identity at state s:

        V2(s) - V1(s) = 1/(1-gamma) sum_s' d_s^pi1(s') [ sum_a (pi2 - pi1)(q2 - lam log pi2)
                                                         + lam KL(pi1 || pi2)(s') ]

    Returns:
        Tuple of (lhs, rhs).
    """
    values1 = reg_values(mdp, pi1, lam)
    values2 = reg_values(mdp, pi2, lam)
    lhs = float(values2.v[s] - values1.v[s])

    start = np.zeros(mdp.n_states)
    start[s] = 1.0
    d = occupancy(mdp, pi1, start=start).d
    inner = np.sum((pi2.probs - pi1.probs) * (values2.q - lam * pi2.log_probs), axis=1)
    inner += lam * rel_entr(pi1.probs, pi2.probs).sum(axis=1)
    rhs = float(d @ inner) / (1.0 - mdp.gamma)
    return lhs, rhs


def constants_report(mdp: TabularMdp, lam: float, tau: Tau, eta_a: float, eta_c: float,
                     q_init: Optional[np.ndarray] = None, epsilon: float = 1e-2,
                     j_star: Optional[float] = None) -> ConstantsReport:
    """
    Evaluate every closed-form constant as printed for the given setting.

    The initial logits are taken to be zero (uniform policy); q_init defaults
    to the zero matrix. j_star is computed by soft value iteration unless given.
    """
    n_states, n_actions = mdp.n_states, mdp.n_actions
    gamma, rho, t = mdp.gamma, mdp.rho_min, tau.tau
    log_a = math.log(n_actions)
    one_minus = 1.0 - gamma

    theta0 = Logits.zeros(n_states, n_actions)
    policy0 = softmax_policy(theta0)
    q_init = np.zeros((n_states, n_actions)) if q_init is None else np.asarray(q_init, dtype=np.float64)
    q_gap = float(np.sum((q_init - reg_values(mdp, policy0, lam).q) ** 2))

    L = smoothness_L(lam, gamma, n_actions)
    mu_floor = lam * one_minus * rho * rho * t * t / n_states
    mu_c = one_minus * one_minus * rho * t / 2.0
    sigma_sq = (36.0 + 4.0 * lam * lam + 36.0 * lam * lam * log_a * log_a) / (one_minus * one_minus)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inv_t = np.float64(1.0) / t
        c_lambda = float((2.0 * gamma / one_minus) * ((1.0 + lam * log_a) / one_minus
                                                       + lam * np.log(inv_t) + lam * inv_t / 2.0))
        c_tilde = math.sqrt(n_states * n_actions) * c_lambda
        c_tilde_sq = c_tilde * c_tilde

        bias_B = float(
            2.0 * q_gap
            + 2.0 * c_tilde_sq * rho * rho * t * t * (2.0 + lam * lam + 3.0 * lam * lam * log_a * log_a) / (L * L)
            + np.float64(2.0 * one_minus * one_minus * rho * t * sigma_sq) / (20.0 * mu_c)
            + 2.0 * n_states * n_actions * (1.0 + lam * lam * log_a * log_a) / (one_minus * one_minus)
        )

        rate = one_minus * one_minus * rho * t
        h_drift = np.log1p(c_tilde_sq * one_minus * one_minus * rho * rho * t * t / (L * L))
        h_bias = np.log(np.float64(bias_B) / (mu_floor * one_minus * one_minus * epsilon))
        predicted_H_floor = float(max(h_drift, h_bias) / np.float64(rate * mu_c))

        actor_step_cap = float(min(
            one_minus * rho * t / L,
            np.cbrt(mu_floor) * one_minus ** (4.0 / 3.0) * np.cbrt(epsilon)
            / (np.cbrt(c_tilde_sq) * np.cbrt(L) * (1.0 + lam * log_a) ** (2.0 / 3.0)),
            np.float64(mu_c * mu_floor * epsilon) / (L * sigma_sq * rho * t),
        ))
        critic_step_cap = rate / 40.0
        tuning_H_floor = float(2.0 / np.float64(eta_c * mu_c) * np.log(2.0 + 4.0 * c_tilde_sq * eta_a * eta_a))

        j0 = reg_objective(mdp, policy0, lam)
        if j_star is None:
            j_star = optimal_reg_values(mdp, lam).j_star
        gap_log = math.log((j_star - j0) / epsilon) if j_star - j0 > epsilon else 0.0
        exact_critic_K_floor = float(L / np.float64(mu_floor) / np.float64(one_minus * rho * t) * gap_log)

    report = ConstantsReport(
        smoothness_L=L,
        pl_floor_mu=mu_floor,
        critic_mu=mu_c,
        critic_sigma_sq=sigma_sq,
        c_lambda=c_lambda,
        c_tilde_lambda=c_tilde,
        bias_B=bias_B,
        predicted_H_floor=predicted_H_floor,
        actor_step_cap=actor_step_cap,
        critic_step_cap=critic_step_cap,
        tuning_H_floor=tuning_H_floor,
        exact_critic_K_floor=exact_critic_K_floor,
        tau=t,
        epsilon=epsilon,
    )
    if t <= 0.0 or rho <= 0.0:
        # every tau- and rho-dependent quantity is undefined at a zero floor
        for name in ("c_lambda", "c_tilde_lambda", "bias_B", "predicted_H_floor", "tuning_H_floor",
                     "exact_critic_K_floor"):
            setattr(report, name, math.inf)
        report.degenerate.extend(["pl_floor_mu", "critic_mu", "actor_step_cap", "critic_step_cap"])
    for name, value in asdict(report).items():
        if isinstance(value, float) and not math.isfinite(value):
            setattr(report, name, math.inf)
            if name not in report.degenerate:
                report.degenerate.append(name)
    return report
