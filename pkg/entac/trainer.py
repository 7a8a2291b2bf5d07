"""
Entropy-regularized actor-critic on a tabular MDP.

Each outer iteration runs H temporal-difference steps of the critic (or sets
the critic to the exact regularized Q-function), builds soft values and
advantages from it, and takes one projected stochastic actor step from a
single sampled state-action pair.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .config import TrainConfig
from .exact import ConstantsReport, constants_report, exact_gradient, optimal_reg_values, reg_values
from .mdp import TabularMdp, require_valid
from .modes import CriticMode, Sampler
from .policy import Logits, Policy, Tau, project_logits, softmax_policy
from .sampling import (
    ActorDist,
    CriticDist,
    actor_grad_estimate,
    critic_dist,
    draw_critic_samples,
    sample_rollout_pair,
    sample_rollout_tuple,
    soft_state_values,
    td_update,
)

logger = logging.getLogger(__name__)

__all__ = [
    "CriticState",
    "EntropyActorCritic",
    "RunTrace",
    "TraceRecord",
    "TrainConfig",
    "actor_step",
    "advantage_from_q",
    "critic_inner_loop",
    "run_ent_ac",
]


@dataclass(frozen=True)
class CriticState:
    """Critic estimate q_hat with the soft values and advantages it implies."""

    q_hat: np.ndarray
    v_hat: np.ndarray
    adv_hat: np.ndarray


@dataclass(frozen=True)
class TraceRecord:
    k: int
    objective: float
    subopt: float
    grad_norm: float
    critic_mse: float
    policy_min: float
    wall_time: float

    CSV_FIELDS = ("k", "objective", "subopt", "grad_norm", "critic_mse", "policy_min")

    def csv_row(self) -> list[str]:
        return [str(self.k)] + [format(getattr(self, name), ".17g") for name in self.CSV_FIELDS[1:]]

    def to_dict(self) -> dict[str, Any]:
        return {name: getattr(self, name) for name in self.CSV_FIELDS + ("wall_time",)}


@dataclass
class RunTrace:
    """Evaluation records of one run plus the context needed to read them."""

    config: TrainConfig
    j_star: float
    constants: ConstantsReport
    records: list[TraceRecord] = field(default_factory=list)
    aborted: Optional[str] = None
    runtime_seconds: float = 0.0

    @property
    def final(self) -> Optional[TraceRecord]:
        return self.records[-1] if self.records else None

    def summary(self) -> dict[str, Any]:
        final = self.final
        return {
            "config": self.config.to_dict(),
            "J_star": self.j_star,
            "final": final.to_dict() if final else None,
            "runtime_seconds": self.runtime_seconds,
            "aborted": self.aborted,
            "constants": self.constants.to_dict(),
        }


def _critic_state(q_hat: np.ndarray, policy: Policy, lam: float) -> CriticState:
    v_hat = soft_state_values(q_hat, policy, lam)
    adv_hat = q_hat - lam * policy.log_probs - v_hat[:, None]
    return CriticState(q_hat=q_hat, v_hat=v_hat, adv_hat=adv_hat)


def advantage_from_q(q_hat: np.ndarray, theta: Logits, lam: float) -> CriticState:
    """
    v_hat(s) = sum_a pi(a|s) (q_hat(s,a) - lam log pi(a|s)) and
    adv_hat = q_hat - lam log pi - v_hat.
    """
    return _critic_state(np.asarray(q_hat, dtype=np.float64), softmax_policy(theta), lam)


def _td_pass(mdp: TabularMdp, policy: Policy, q_init: np.ndarray, samples: np.ndarray,
             eta_c: float, lam: float) -> np.ndarray:
    q = np.array(q_init, dtype=np.float64)
    for sample in samples.tolist():
        td_update(sample, policy, q, lam, mdp).add_to(q, eta_c)
    return q


def critic_inner_loop(mdp: TabularMdp, theta: Logits, q_init: np.ndarray, H: int, eta_c: float, lam: float,
                      rng: np.random.Generator, sampler: Sampler = Sampler.OCCUPANCY) -> np.ndarray:
    """
    H sequential TD steps q <- q + eta_c delta e_(s,a), warm-started at q_init,
    on H i.i.d. critic tuples drawn up front.
    """
    if H < 1:
        raise ValueError(f"H must be >= 1, got {H!r}")
    samples = draw_critic_samples(mdp, theta, H, rng, sampler)
    return _td_pass(mdp, softmax_policy(theta), q_init, samples, eta_c, lam)


def actor_step(theta: Logits, sample: tuple[int, int], critic: CriticState, eta_a: float, tau: Tau,
               rng: np.random.Generator, gamma: float) -> Logits:
    """
    theta <- project(theta + eta_a g_a) with g_a = adv_hat(s,a) / (1 - gamma)
    at the sampled pair.

    Raises:
        FloatingPointError: If the step produces a non-finite logit
    """
    update = actor_grad_estimate(sample, critic.adv_hat, gamma)
    stepped = np.array(theta.theta)
    update.add_to(stepped, eta_a)
    if not np.isfinite(stepped[update.index]):
        raise FloatingPointError(f"non-finite logit at {update.index} (advantage {update.value!r})")
    return project_logits(Logits(stepped), tau, rng)


class EntropyActorCritic:
    """
    One seeded run of the algorithm on a fixed MDP.

    The run owns a single random stream, consumed per iteration in a fixed
    order: critic tuples, then the actor pair, then projection tie-breaks.
    """

    def __init__(self, mdp: TabularMdp, config: TrainConfig, j_star: Optional[float] = None) -> None:
        require_valid(mdp)
        self.mdp = mdp
        self.config = config
        self.tau = config.resolve_tau(mdp)
        self.q_init = config.initial_q(mdp.n_states, mdp.n_actions)
        self.j_star = optimal_reg_values(mdp, config.lam).j_star if j_star is None else j_star
        self.rng = np.random.default_rng(config.seed)

    def _constants(self) -> ConstantsReport:
        return constants_report(self.mdp, self.config.lam, self.tau, self.config.eta_a, self.config.eta_c,
                                q_init=self.q_init, j_star=self.j_star)

    def _critic(self, policy: Policy, q_prev: np.ndarray, pairs: ActorDist) -> np.ndarray:
        config = self.config
        if config.critic_mode is CriticMode.EXACT_ORACLE:
            return reg_values(self.mdp, policy, config.lam).q
        if config.sampler is Sampler.ROLLOUT:
            samples = np.array([sample_rollout_tuple(self.mdp, policy, self.rng) for _ in range(config.H)],
                               dtype=np.int64)
        else:
            dist = CriticDist(pairs=pairs, transition=self.mdp.transition, policy=policy)
            samples = dist.sample_batch(config.H, self.rng)
        return _td_pass(self.mdp, policy, q_prev, samples, config.eta_c, config.lam)

    def _record(self, k: int, policy: Policy, pairs: ActorDist, q_hat: np.ndarray, started: float) -> TraceRecord:
        values = reg_values(self.mdp, policy, self.config.lam)
        objective = float(self.mdp.init_dist @ values.v)
        gradient = pairs.matrix() * values.adv / (1.0 - self.mdp.gamma)
        return TraceRecord(
            k=k,
            objective=objective,
            subopt=self.j_star - objective,
            grad_norm=float(np.linalg.norm(gradient)),
            critic_mse=float(np.sum((q_hat - values.q) ** 2)),
            policy_min=policy.min_prob,
            wall_time=time.perf_counter() - started,
        )

    def _actor(self, theta: Logits, policy: Policy, pairs: ActorDist, critic: CriticState) -> Logits:
        config = self.config
        if config.exact_actor_gradient:
            stepped = theta.theta + config.eta_a * exact_gradient(self.mdp, theta, config.lam)
            if not np.isfinite(stepped).all():
                raise FloatingPointError("non-finite logits after exact gradient step")
            return project_logits(Logits(stepped), self.tau, self.rng)
        if config.sampler is Sampler.ROLLOUT:
            sample = sample_rollout_pair(self.mdp, policy, self.rng)
        else:
            sample = pairs.sample(self.rng)
        return actor_step(theta, sample, critic, config.eta_a, self.tau, self.rng, self.mdp.gamma)

    def run(self) -> RunTrace:
        config = self.config
        trace = RunTrace(config=config, j_star=self.j_star, constants=self._constants())
        started = time.perf_counter()
        theta = Logits.zeros(self.mdp.n_states, self.mdp.n_actions)
        q_hat = self.q_init
        for k in range(config.K + 1):
            policy = softmax_policy(theta)
            pairs = critic_dist(self.mdp, theta).pairs
            q_hat = self._critic(policy, q_hat, pairs)
            if k == config.K or k % config.eval_every == 0:
                trace.records.append(self._record(k, policy, pairs, q_hat, started))
            if k == config.K:
                break
            critic = _critic_state(q_hat, policy, config.lam)
            try:
                theta = self._actor(theta, policy, pairs, critic)
            except FloatingPointError as e:
                trace.aborted = f"iteration {k}: {e}"
                logger.error("run aborted (seed %d): %s", config.seed, trace.aborted)
                break
        trace.runtime_seconds = time.perf_counter() - started
        final = trace.final
        logger.debug("run finished (seed %d, H=%d): final objective %.6g", config.seed, config.H,
                     final.objective if final else float("nan"))
        return trace


def run_ent_ac(mdp: TabularMdp, config: TrainConfig) -> RunTrace:
    return EntropyActorCritic(mdp, config).run()
