"""
Sampling distributions for the actor and the critic, the one-sample gradient
estimators built on them, and their exact moments by enumeration.

The actor draws (s, a) with probability d(s) pi(a|s). The critic extends the
pair with s' ~ P(.|s, a) and a' ~ pi(.|s'). Both are held factored and never
materialized as dense tuple vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mdp import TabularMdp, occupancy
from .modes import Sampler
from .policy import Logits, Policy, softmax_policy


def _inverse_cdf(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """
    Row-wise inverse-CDF lookup over the last axis of probs.

    Counts the cumulative sums <= u, then clips to the last index with
    positive mass so rounding in the final cumulative sum can never select a
    zero-probability trailing entry.
    """
    cdf = np.cumsum(probs, axis=-1)
    idx = np.sum(cdf <= u[..., None], axis=-1)
    n = probs.shape[-1]
    last = n - 1 - np.argmax((probs > 0.0)[..., ::-1], axis=-1)
    return np.minimum(idx, last)


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Draw one index from a probability vector by inverse CDF over a fixed order."""
    probs = np.asarray(probs, dtype=np.float64)
    return int(_inverse_cdf(probs, np.asarray(rng.random())))


@dataclass(frozen=True)
class SparseUpdate:
    """An update with a single nonzero coordinate."""

    index: tuple[int, int]
    value: float

    def add_to(self, array: np.ndarray, scale: float = 1.0) -> None:
        """array[index] += scale * value, in place."""
        array[self.index] += scale * self.value


@dataclass(frozen=True)
class ActorDist:
    """Exact categorical over state-action pairs, flattened row-major."""

    probs: np.ndarray
    n_states: int
    n_actions: int

    def pair(self, index: int) -> tuple[int, int]:
        return divmod(int(index), self.n_actions)

    def matrix(self) -> np.ndarray:
        return self.probs.reshape(self.n_states, self.n_actions)

    def sample(self, rng: np.random.Generator) -> tuple[int, int]:
        return self.pair(sample_categorical(self.probs, rng))


@dataclass(frozen=True)
class CriticDist:
    """
    Factored distribution over (s, a, s', a') tuples:
    d(s) pi(a|s) P(s'|s, a) pi(a'|s').
    """

    pairs: ActorDist
    transition: np.ndarray
    policy: Policy

    def sample(self, rng: np.random.Generator) -> tuple[int, int, int, int]:
        return tuple(int(i) for i in self.sample_batch(1, rng)[0])

    def sample_batch(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """
        n i.i.d. tuples as an (n, 4) integer array. Consumes exactly one
        rng.random((n, 3)) call.
        """
        u = rng.random((n, 3))
        flat = _inverse_cdf(self.pairs.probs, u[:, 0])
        s, a = np.divmod(flat, self.pairs.n_actions)
        s_next = _inverse_cdf(self.transition[s, a], u[:, 1])
        a_next = _inverse_cdf(self.policy.probs[s_next], u[:, 2])
        return np.stack([s, a, s_next, a_next], axis=1)

    def weights(self) -> np.ndarray:
        """Joint probabilities as an (S, A, S, A) tensor, for enumeration."""
        return (self.pairs.matrix()[:, :, None, None]
                * self.transition[:, :, :, None]
                * self.policy.probs[None, None, :, :])


def _pair_probs(mdp: TabularMdp, policy: Policy) -> np.ndarray:
    d = np.clip(occupancy(mdp, policy).d, 0.0, None)
    return (d[:, None] * policy.probs).ravel()


def actor_dist(mdp: TabularMdp, theta: Logits) -> ActorDist:
    policy = softmax_policy(theta)
    return ActorDist(probs=_pair_probs(mdp, policy), n_states=mdp.n_states, n_actions=mdp.n_actions)


def critic_dist(mdp: TabularMdp, theta: Logits) -> CriticDist:
    policy = softmax_policy(theta)
    pairs = ActorDist(probs=_pair_probs(mdp, policy), n_states=mdp.n_states, n_actions=mdp.n_actions)
    return CriticDist(pairs=pairs, transition=mdp.transition, policy=policy)


def sample_rollout_pair(mdp: TabularMdp, policy: Policy, rng: np.random.Generator) -> tuple[int, int]:
    """
    (s, a) from the actor distribution by simulation: s0 ~ rho, a horizon
    T ~ Geometric(1 - gamma) on {0, 1, ...}, T steps under the policy, then
    a ~ pi(.|s_T).
    """
    s = sample_categorical(mdp.init_dist, rng)
    horizon = int(rng.geometric(1.0 - mdp.gamma)) - 1
    for _ in range(horizon):
        a = sample_categorical(policy.probs[s], rng)
        s = sample_categorical(mdp.transition[s, a], rng)
    return s, sample_categorical(policy.probs[s], rng)


def sample_rollout_tuple(mdp: TabularMdp, policy: Policy, rng: np.random.Generator) -> tuple[int, int, int, int]:
    s, a = sample_rollout_pair(mdp, policy, rng)
    s_next = sample_categorical(mdp.transition[s, a], rng)
    return s, a, s_next, sample_categorical(policy.probs[s_next], rng)


def draw_critic_samples(mdp: TabularMdp, theta: Logits, n: int, rng: np.random.Generator,
                        sampler: Sampler = Sampler.OCCUPANCY) -> np.ndarray:
    """n critic tuples as an (n, 4) integer array from the chosen sampler."""
    if sampler is Sampler.ROLLOUT:
        policy = softmax_policy(theta)
        return np.array([sample_rollout_tuple(mdp, policy, rng) for _ in range(n)], dtype=np.int64).reshape(n, 4)
    return critic_dist(mdp, theta).sample_batch(n, rng)


def draw_actor_sample(mdp: TabularMdp, theta: Logits, rng: np.random.Generator,
                      sampler: Sampler = Sampler.OCCUPANCY) -> tuple[int, int]:
    if sampler is Sampler.ROLLOUT:
        return sample_rollout_pair(mdp, softmax_policy(theta), rng)
    return actor_dist(mdp, theta).sample(rng)


def actor_grad_estimate(sample: tuple[int, int], adv_hat: np.ndarray, gamma: float) -> SparseUpdate:
    """g_a = adv_hat(s, a) / (1 - gamma) at the sampled pair."""
    s, a = sample
    return SparseUpdate(index=(int(s), int(a)), value=float(adv_hat[s, a]) / (1.0 - gamma))


def td_update(sample: tuple[int, int, int, int], policy: Policy, q_hat: np.ndarray, lam: float,
              mdp: TabularMdp) -> SparseUpdate:
    """
    Regularized TD error at (s, a):

        delta = r(s,a) + gamma (q_hat(s',a') - lam log pi(a'|s')) - q_hat(s,a)
    """
    s, a, s_next, a_next = (int(i) for i in sample)
    target = q_hat[s_next, a_next]
    if lam:
        target -= lam * policy.log_probs[s_next, a_next]
    delta = mdp.reward[s, a] + mdp.gamma * target - q_hat[s, a]
    return SparseUpdate(index=(s, a), value=float(delta))


def soft_state_values(q: np.ndarray, policy: Policy, lam: float) -> np.ndarray:
    """v(s) = sum_a pi(a|s) (q(s,a) - lam log pi(a|s))."""
    inner = q if not lam else q - lam * np.where(policy.probs > 0.0, policy.log_probs, 0.0)
    return np.sum(policy.probs * inner, axis=1)


def expected_actor_grad(mdp: TabularMdp, theta: Logits, adv_hat: np.ndarray) -> np.ndarray:
    """E[g_a] = d(s) pi(a|s) adv_hat(s, a) / (1 - gamma), enumerated over the pair support."""
    weights = actor_dist(mdp, theta).matrix()
    return weights * adv_hat / (1.0 - mdp.gamma)


@dataclass(frozen=True)
class ActorMoments:
    """
    Moments of the one-sample actor estimator.

    bias_sq is ||E g - grad||^2, variance is E||g - E g||^2 and
    mse_to_gradient is E||g - grad||^2; variance_bound is
    (1 - gamma)^-2 sum d pi adv_hat^2.
    """

    bias_sq: float
    variance: float
    variance_bound: float
    mse_to_gradient: float


def _spread(weights: np.ndarray, values: np.ndarray, center: np.ndarray) -> float:
    """
    E||v_x e_x - center||^2 for a one-hot estimator taking value values[i] at
    coordinate i with probability weights[i].
    """
    center_sq = math.fsum((center * center).ravel())
    terms = weights * ((values - center) ** 2 - center * center)
    return max(0.0, center_sq + math.fsum(terms.ravel()))


def actor_bias_variance(mdp: TabularMdp, theta: Logits, adv_hat: np.ndarray, lam: float) -> ActorMoments:
    """Exact moments of the actor estimator with advantage estimate adv_hat."""
    from .exact import exact_gradient

    weights = actor_dist(mdp, theta).matrix()
    scale = 1.0 / (1.0 - mdp.gamma)
    values = adv_hat * scale
    mean = weights * values
    gradient = exact_gradient(mdp, theta, lam)
    bias = mean - gradient
    return ActorMoments(
        bias_sq=math.fsum((bias * bias).ravel()),
        variance=_spread(weights, values, mean),
        variance_bound=scale * scale * math.fsum((weights * adv_hat * adv_hat).ravel()),
        mse_to_gradient=_spread(weights, values, gradient),
    )


def extended_kernel(mdp: TabularMdp, policy: Policy) -> np.ndarray:
    """State-action transition matrix P(s'|s,a) pi(a'|s'), shape (SA, SA)."""
    n = mdp.n_states * mdp.n_actions
    return (mdp.transition[:, :, :, None] * policy.probs[None, None, :, :]).reshape(n, n)


def state_action_weights(mdp: TabularMdp, policy: Policy) -> np.ndarray:
    """Diagonal of the critic weighting matrix, d(s) pi(a|s) flattened."""
    return _pair_probs(mdp, policy)


def deterministic_td_operator(mdp: TabularMdp, theta: Logits, q: np.ndarray, lam: float,
                              eta_c: float) -> np.ndarray:
    """
    Expected critic step q + eta_c D (r + gamma P v_q - q), with D = diag(d pi)
    and v_q the soft state values of q under pi.
    """
    if eta_c < 0.0:
        raise ValueError(f"eta_c must be nonnegative, got {eta_c!r}")
    policy = softmax_policy(theta)
    weights = _pair_probs(mdp, policy).reshape(q.shape)
    v_q = soft_state_values(q, policy, lam)
    target = mdp.reward + mdp.gamma * np.einsum("sat,t->sa", mdp.transition, v_q)
    return q + eta_c * weights * (target - q)


def _td_errors(mdp: TabularMdp, policy: Policy, q: np.ndarray, lam: float) -> np.ndarray:
    """delta for every (s, a, s', a') as an (S, A, S, A) tensor."""
    next_value = q if not lam else q - lam * policy.log_probs
    return mdp.reward[:, :, None, None] + mdp.gamma * next_value[None, None, :, :] - q[:, :, None, None]


def expected_td_update(mdp: TabularMdp, theta: Logits, q: np.ndarray, lam: float) -> np.ndarray:
    """E[delta e_(s,a)] over the critic distribution, by enumeration."""
    dist = critic_dist(mdp, theta)
    weighted = dist.weights() * _td_errors(mdp, dist.policy, q, lam)
    return weighted.sum(axis=(2, 3))


def critic_estimator_second_moment(mdp: TabularMdp, theta: Logits, q: np.ndarray, lam: float) -> tuple[float, float]:
    """
    Exact E||g_c - E g_c||^2 of the TD estimator g_c = delta e_(s,a), and the
    bound 8 ||q||_inf^2 + 4 + 4 lam^2 + 4 lam^2 log(|A|)^2.

    Returns:
        Tuple of (variance, bound).
    """
    dist = critic_dist(mdp, theta)
    weights = dist.weights()
    deltas = _td_errors(mdp, dist.policy, q, lam)
    pair_weights = dist.pairs.matrix()
    mean = (weights * deltas).sum(axis=(2, 3))

    # coordinate (s, a) of the sample carries delta; all others carry 0
    mean_sq = math.fsum((mean * mean).ravel())
    off_support = -math.fsum((pair_weights * mean * mean).ravel())
    on_support = math.fsum((weights * (deltas - mean[:, :, None, None]) ** 2).ravel())
    variance = max(0.0, mean_sq + off_support + on_support)

    log_a = math.log(mdp.n_actions)
    q_sup = float(np.abs(q).max())
    bound = 8.0 * q_sup * q_sup + 4.0 + 4.0 * lam * lam + 4.0 * lam * lam * log_a * log_a
    return variance, bound
