"""
Softmax policies over tabular logits and the policy-improvement projection.

The projection raises every action probability at or below a floor tau to
exactly tau and takes the added mass from the most likely action. In logit
space it is applied by re-logging only the rows it changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .mdp import TabularMdp


def _readonly(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Logits:
    """Actor parameters theta, one row of logits per state."""

    theta: np.ndarray

    def __post_init__(self) -> None:
        theta = _readonly(self.theta)
        if theta.ndim != 2:
            raise ValueError(f"logits must be a (S, A) matrix, got shape {theta.shape}")
        if not np.isfinite(theta).all():
            raise ValueError("logits must be finite")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def zeros(cls, n_states: int, n_actions: int) -> Logits:
        return cls(np.zeros((n_states, n_actions)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.theta.shape


@dataclass(frozen=True)
class Policy:
    """
    Row-stochastic policy with its log-probabilities.

    log_probs is authoritative: a softmax of extreme logits may round a
    probability to 0.0 while its log stays finite.
    """

    probs: np.ndarray
    log_probs: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "probs", _readonly(self.probs))
        object.__setattr__(self, "log_probs", _readonly(self.log_probs))
        if self.probs.shape != self.log_probs.shape or self.probs.ndim != 2:
            raise ValueError(f"probs {self.probs.shape} and log_probs {self.log_probs.shape} must be equal (S, A)")

    @classmethod
    def from_probs(cls, probs: np.ndarray) -> Policy:
        """
        Wrap a probability matrix. Rows are validated; zero entries get a
        log-probability of -inf.

        Raises:
            ValueError: If an entry is negative or a row does not sum to 1
        """
        probs = np.asarray(probs, dtype=np.float64)
        if (probs < 0.0).any():
            raise ValueError("policy probabilities must be nonnegative")
        row_sums = probs.sum(axis=1)
        bad = np.nonzero(np.abs(row_sums - 1.0) > 1e-12)[0]
        if bad.size:
            raise ValueError(f"policy row {int(bad[0])} sums to {row_sums[bad[0]]!r}")
        with np.errstate(divide="ignore"):
            log_probs = np.log(probs)
        return cls(probs=probs, log_probs=log_probs)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> Policy:
        return cls.from_probs(np.full((n_states, n_actions), 1.0 / n_actions))

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    @property
    def min_prob(self) -> float:
        return float(self.probs.min())


@dataclass(frozen=True)
class Tau:
    """
    Projection floor, kept both linear and in log space.

    A fixed floor stores tau exactly as given. A floor built from its log keeps
    tau = exp(log_tau), which is 0 when exp underflows; a tau of 0 (log_tau
    -inf, or finite but underflowing) disables the projection.
    """

    tau: float
    log_tau: float

    @classmethod
    def disabled(cls) -> Tau:
        return cls(0.0, -math.inf)

    @classmethod
    def fixed(cls, tau: float) -> Tau:
        if not tau > 0.0:
            raise ValueError(f"tau must be positive, got {tau!r}")
        return cls(tau, math.log(tau))

    @classmethod
    def from_log(cls, log_tau: float) -> Tau:
        if log_tau == -math.inf:
            return cls.disabled()
        return cls(math.exp(log_tau), log_tau)

    @property
    def is_active(self) -> bool:
        return self.tau > 0.0


def softmax_policy(theta: Logits) -> Policy:
    """Softmax of each logit row, log-probabilities by row-max-shifted log-sum-exp."""
    shifted = theta.theta - theta.theta.max(axis=1, keepdims=True)
    log_probs = shifted - logsumexp(shifted, axis=1, keepdims=True)
    return Policy(probs=np.exp(log_probs), log_probs=log_probs)


def logits_from_policy(policy: Policy) -> Logits:
    """
    theta(s, a) = log pi(a|s), the canonical logits of a policy.

    Raises:
        ValueError: If the policy has a zero probability
    """
    if not np.isfinite(policy.log_probs).all():
        raise ValueError("policy has zero probabilities; logits would be -inf")
    return Logits(policy.log_probs.copy())


def random_policy(n_states: int, n_actions: int, rng: np.random.Generator, floor: float = 0.0) -> Policy:
    """
    Policy with rows drawn uniformly from the simplex; with floor > 0 the rows
    are drawn from the part of the simplex where every entry is >= floor.
    """
    if floor * n_actions >= 1.0:
        raise ValueError(f"floor {floor!r} is infeasible for {n_actions} actions")
    weights = rng.standard_exponential((n_states, n_actions))
    rows = weights / weights.sum(axis=1, keepdims=True)
    probs = floor + (1.0 - n_actions * floor) * rows
    probs /= probs.sum(axis=1, keepdims=True)
    return Policy.from_probs(probs)


def tau_lambda(mdp: TabularMdp, lam: float) -> Tau:
    """
    Improvement floor for regularization strength lam:

        log tau = min(-log 3 - (16 + 8 gamma lam log|A|) / (lam (1-gamma)^2 rho_min),
                      -8 log 3 - 4 log|A|)

    Returns the disabled sentinel when rho_min is 0.
    """
    if lam <= 0.0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    rho_min = mdp.rho_min
    if rho_min <= 0.0:
        return Tau.disabled()
    log_actions = math.log(mdp.n_actions)
    gamma = mdp.gamma
    exponent = (16.0 + 8.0 * gamma * lam * log_actions) / (lam * (1.0 - gamma) ** 2 * rho_min)
    return Tau.from_log(min(-math.log(3.0) - exponent, -8.0 * math.log(3.0) - 4.0 * log_actions))


def _check_tau(tau: Tau, n_actions: int) -> None:
    limit = 1.0 / (2.0 * n_actions * n_actions)
    if tau.tau >= limit:
        raise ValueError(f"tau {tau.tau!r} must be below 1/(2|A|^2) = {limit!r}")


def _project_rows(probs: np.ndarray, rows: np.ndarray, tau: float, rng: np.random.Generator) -> np.ndarray:
    out = probs.copy()
    for s in rows:
        row = probs[s]
        low = row <= tau
        added = float(np.sum(tau - row[low]))
        best = np.flatnonzero(row == row.max())
        a_max = best[0] if best.size == 1 else rng.choice(best)
        out[s, low] = tau
        out[s, a_max] -= added
    return out


def project_policy(policy: Policy, tau: Tau, rng: np.random.Generator) -> Policy:
    """
    Raise every probability <= tau to tau, taking the mass from the argmax.

    Rows with every entry already >= tau are left alone. Ties in the argmax
    are broken uniformly with rng, which is only consumed for rows that are
    actually projected and have a tie.

    Raises:
        ValueError: If tau >= 1/(2|A|^2)
    """
    if not tau.is_active:
        return policy
    _check_tau(tau, policy.shape[1])
    rows = np.flatnonzero((policy.probs < tau.tau).any(axis=1))
    if rows.size == 0:
        return policy
    probs = _project_rows(policy.probs, rows, tau.tau, rng)
    log_probs = np.array(policy.log_probs)
    log_probs[rows] = np.log(probs[rows])
    return Policy(probs=probs, log_probs=log_probs)


def project_logits(theta: Logits, tau: Tau, rng: np.random.Generator) -> Logits:
    """
    The projection in logit space: rows whose softmax has an entry below tau
    are replaced by the log of their projected probabilities. Other rows, and
    theta as a whole when nothing changes, are returned untouched.
    """
    if not tau.is_active:
        return theta
    _check_tau(tau, theta.shape[1])
    policy = softmax_policy(theta)
    rows = np.flatnonzero((policy.probs < tau.tau).any(axis=1))
    if rows.size == 0:
        return theta
    probs = _project_rows(policy.probs, rows, tau.tau, rng)
    new_theta = np.array(theta.theta)
    new_theta[rows] = np.log(probs[rows])
    return Logits(new_theta)
