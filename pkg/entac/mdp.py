"""
Tabular discounted MDPs: representation, validation, the two experiment
environments (gridworld and random synthetic models) and discounted state
occupancy measures.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import TYPE_CHECKING, Any, Optional

import numpy as np
from scipy import linalg

from .modes import InitMode

if TYPE_CHECKING:
    from .policy import Policy

logger = logging.getLogger(__name__)

PROB_TOL = 1e-12
RESIDUAL_WARN = 1e-8


class InvalidMdpError(ValueError):
    """A malformed MDP document, or an MDP that breaks a TabularMdp invariant."""


def _frozen(array: Any) -> np.ndarray:
    out = np.array(array, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TabularMdp:
    """
    Finite discounted MDP with state-action rewards.

    Arrays are copied and made read-only on construction, so instances can be
    shared freely between runs and worker processes.
    """

    transition: np.ndarray  # (S, A, S')
    reward: np.ndarray  # (S, A)
    init_dist: np.ndarray  # (S,)
    gamma: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "reward", _frozen(self.reward))
        object.__setattr__(self, "init_dist", _frozen(self.init_dist))
        object.__setattr__(self, "gamma", float(self.gamma))
        if self.transition.ndim != 3 or self.transition.shape[0] != self.transition.shape[2]:
            raise InvalidMdpError(f"transition must have shape (S, A, S), got {self.transition.shape}")
        if self.reward.shape != self.transition.shape[:2]:
            raise InvalidMdpError(f"reward must have shape {self.transition.shape[:2]}, got {self.reward.shape}")
        if self.init_dist.shape != (self.transition.shape[0],):
            shape = (self.transition.shape[0],)
            raise InvalidMdpError(f"init_dist must have shape {shape}, got {self.init_dist.shape}")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def rho_min(self) -> float:
        return float(self.init_dist.min())

    def policy_kernel(self, probs: np.ndarray) -> np.ndarray:
        """State-to-state kernel P_pi(s'|s) = sum_a pi(a|s) P(s'|s,a)."""
        return np.einsum("sa,sat->st", probs, self.transition)

    def to_dict(self) -> dict[str, Any]:
        """JSON document with row-major flattened arrays."""
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "transition": self.transition.ravel().tolist(),
            "reward": self.reward.ravel().tolist(),
            "init_dist": self.init_dist.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TabularMdp:
        """
        Create a TabularMdp from a JSON document produced by to_dict.

        Raises:
            InvalidMdpError: If a key is missing, a value is not numeric or an array has the wrong length
        """
        missing = [k for k in ("n_states", "n_actions", "gamma", "transition", "reward", "init_dist") if k not in data]
        if missing:
            raise InvalidMdpError(f"Missing required MDP field(s): {', '.join(missing)}")
        try:
            n_states, n_actions = int(data["n_states"]), int(data["n_actions"])
            transition = np.asarray(data["transition"], dtype=np.float64)
            reward = np.asarray(data["reward"], dtype=np.float64)
            init_dist = np.asarray(data["init_dist"], dtype=np.float64)
            gamma = float(data["gamma"])
        except (TypeError, ValueError) as e:
            raise InvalidMdpError(f"MDP fields must be numbers or arrays of numbers: {e}") from None
        expected = n_states * n_actions * n_states
        if transition.size != expected:
            raise InvalidMdpError(f"transition has {transition.size} entries, expected {expected}")
        if reward.size != n_states * n_actions:
            raise InvalidMdpError(f"reward has {reward.size} entries, expected {n_states * n_actions}")
        return cls(
            transition=transition.reshape(n_states, n_actions, n_states),
            reward=reward.reshape(n_states, n_actions),
            init_dist=init_dist,
            gamma=gamma,
        )


@dataclass(frozen=True)
class Violation:
    """One broken TabularMdp invariant."""

    what: str
    index: tuple[int, ...]
    magnitude: float

    def __str__(self) -> str:
        where = "(" + ",".join(str(i) for i in self.index) + ")"
        return f"{self.what} at {where}: {self.magnitude!r}"


@dataclass(frozen=True)
class Occupancy:
    """Discounted state occupancy d(s) together with the linear-solve residual."""

    d: np.ndarray
    residual: float = field(default=0.0)


class Move(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3


_MOVE_DELTAS = {
    Move.UP: (-1, 0),
    Move.DOWN: (1, 0),
    Move.LEFT: (0, -1),
    Move.RIGHT: (0, 1),
}


def validate(mdp: TabularMdp) -> list[Violation]:
    """
    Check every TabularMdp invariant.

    Returns:
        List of violations; empty iff the MDP is well formed.
    """
    violations: list[Violation] = []
    if not 0.0 < mdp.gamma < 1.0:
        violations.append(Violation("gamma out of (0,1)", (), mdp.gamma))

    for index in zip(*np.nonzero(mdp.transition < 0.0)):
        violations.append(Violation("negative transition probability", tuple(int(i) for i in index),
                                    float(mdp.transition[index])))
    row_sums = mdp.transition.sum(axis=2)
    for s, a in zip(*np.nonzero(np.abs(row_sums - 1.0) > PROB_TOL)):
        violations.append(Violation("transition row does not sum to 1", (int(s), int(a)), float(row_sums[s, a])))

    out_of_range = (mdp.reward < 0.0) | (mdp.reward > 1.0) | ~np.isfinite(mdp.reward)
    for s, a in zip(*np.nonzero(out_of_range)):
        violations.append(Violation("reward out of [0,1]", (int(s), int(a)), float(mdp.reward[s, a])))

    for (s,) in zip(*np.nonzero(mdp.init_dist < 0.0)):
        violations.append(Violation("negative initial probability", (int(s),), float(mdp.init_dist[s])))
    total = float(mdp.init_dist.sum())
    if abs(total - 1.0) > PROB_TOL:
        violations.append(Violation("init_dist does not sum to 1", (), total))
    return violations


def require_valid(mdp: TabularMdp) -> None:
    """
    Raises:
        InvalidMdpError: Listing the first few violations, if there are any
    """
    violations = validate(mdp)
    if violations:
        raise InvalidMdpError("invalid MDP: " + "; ".join(str(v) for v in violations[:5]))


def make_gridworld(rows: int, cols: int, gamma: float, init_mode: InitMode | str = InitMode.START_CELL) -> TabularMdp:
    """
    Deterministic grid with four cardinal moves and a sparse goal reward.

    Cell (r, c) is state r * cols + c with row 0 at the top. The goal is the
    top-right cell; entering it from another cell pays 1, and the goal itself
    is absorbing with reward 0. Moves into the boundary leave the agent in
    place.

    Raises:
        ValueError: If the grid has fewer than two cells
    """
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ValueError(f"gridworld needs at least 2 cells, got {rows}x{cols}")
    init_mode = InitMode(init_mode)

    n_states = rows * cols
    goal = cols - 1
    start = (rows - 1) * cols
    transition = np.zeros((n_states, len(Move), n_states))
    reward = np.zeros((n_states, len(Move)))
    for r in range(rows):
        for c in range(cols):
            s = r * cols + c
            for move, (dr, dc) in _MOVE_DELTAS.items():
                if s == goal:
                    transition[s, move, s] = 1.0
                    continue
                nr, nc = r + dr, c + dc
                target = nr * cols + nc if 0 <= nr < rows and 0 <= nc < cols else s
                transition[s, move, target] = 1.0
                if target == goal:
                    reward[s, move] = 1.0

    if init_mode is InitMode.START_CELL:
        init_dist = np.zeros(n_states)
        init_dist[start] = 1.0
    else:
        init_dist = np.full(n_states, 1.0 / n_states)
    return TabularMdp(transition=transition, reward=reward, init_dist=init_dist, gamma=gamma)


def make_synthetic(n_states: int, n_actions: int, gamma: float, seed: int) -> TabularMdp:
    """
    Random dense MDP: transition rows uniform on the simplex (normalized
    standard exponentials), rewards i.i.d. Unif[0, 1], uniform initial
    distribution. A pure function of its arguments.
    """
    if n_states < 1 or n_actions < 1:
        raise ValueError(f"synthetic MDP needs n_states, n_actions >= 1, got {n_states}, {n_actions}")
    rng = np.random.default_rng(seed)
    weights = rng.standard_exponential((n_states, n_actions, n_states))
    transition = weights / weights.sum(axis=2, keepdims=True)
    reward = rng.random((n_states, n_actions))
    init_dist = np.full(n_states, 1.0 / n_states)
    return TabularMdp(transition=transition, reward=reward, init_dist=init_dist, gamma=gamma)


def occupancy(mdp: TabularMdp, policy: Policy, start: Optional[np.ndarray] = None) -> Occupancy:
    """
    Discounted state occupancy d = (1 - gamma) sum_t gamma^t start P_pi^t.

    Solves (I - gamma P_pi^T) d = (1 - gamma) start by LU factorization.

    Args:
        mdp: The MDP
        policy: Policy whose probs have shape (S, A)
        start: Start distribution (default: mdp.init_dist)
    """
    start = mdp.init_dist if start is None else np.asarray(start, dtype=np.float64)
    kernel = mdp.policy_kernel(policy.probs)
    system = np.eye(mdp.n_states) - mdp.gamma * kernel.T
    rhs = (1.0 - mdp.gamma) * start
    d = linalg.lu_solve(linalg.lu_factor(system), rhs)
    residual = float(np.abs(system @ d - rhs).max())
    if residual > RESIDUAL_WARN:
        logger.warning("occupancy solve residual %.3e exceeds %.0e", residual, RESIDUAL_WARN)
    return Occupancy(d=d, residual=residual)


def flow_residual(mdp: TabularMdp, policy: Policy, occ: Occupancy) -> float:
    """Max violation of d(s) = (1-gamma) rho(s) + gamma sum P(s|s',a') pi(a'|s') d(s')."""
    kernel = mdp.policy_kernel(policy.probs)
    rhs = (1.0 - mdp.gamma) * mdp.init_dist + mdp.gamma * kernel.T @ occ.d
    return float(np.abs(occ.d - rhs).max())


def truncated_occupancy(mdp: TabularMdp, policy: Policy, horizon: int) -> np.ndarray:
    """(1 - gamma) sum_{t <= horizon} gamma^t rho P_pi^t, by forward iteration."""
    kernel = mdp.policy_kernel(policy.probs)
    state_dist = mdp.init_dist.copy()
    total = np.zeros(mdp.n_states)
    weight = 1.0 - mdp.gamma
    for _ in range(horizon + 1):
        total += weight * state_dist
        state_dist = state_dist @ kernel
        weight *= mdp.gamma
    return total


def occupancy_distance_bound(mdp: TabularMdp, pi1: Policy, pi2: Policy) -> tuple[float, float]:
    """
    Both sides of ||d^pi1 - d^pi2||_1 <= gamma / (1 - gamma) * max_s ||pi1(.|s) - pi2(.|s)||_1.

    Returns:
        Tuple of (lhs, rhs).
    """
    lhs = float(np.abs(occupancy(mdp, pi1).d - occupancy(mdp, pi2).d).sum())
    row_distance = float(np.abs(pi1.probs - pi2.probs).sum(axis=1).max())
    rhs = mdp.gamma / (1.0 - mdp.gamma) * row_distance
    return lhs, rhs
