"""
Configuration documents for training runs and sweeps.

Documents are JSON objects. Parsing is strict: unknown keys and ill-typed
values raise ConfigError with the dotted key path at the start of the
message. Any top-level key can be overridden from the environment as
ENTAC_<KEY> (a local .env file is honored).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import numpy as np
from dotenv import load_dotenv

from .mdp import TabularMdp, make_gridworld, make_synthetic
from .modes import CriticMode, EnvKind, InitMode, Sampler, TauMode
from .policy import Tau, tau_lambda

DEFAULT_GAMMA = 0.99
ENV_PREFIX = "ENTAC_"


class ConfigError(ValueError):
    """A configuration document is malformed; the message starts with the key path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class EnvSpec:
    """Which MDP to build: a gridworld, a seeded synthetic MDP or a JSON file."""

    kind: EnvKind = EnvKind.GRIDWORLD
    rows: int = 2
    cols: int = 2
    init_mode: InitMode = InitMode.START_CELL
    n_states: int = 4
    n_actions: int = 4
    seed: int = 0
    path: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", EnvKind(self.kind))
        object.__setattr__(self, "init_mode", InitMode(self.init_mode))

    def build(self, gamma: Optional[float] = None) -> TabularMdp:
        """
        Construct the MDP. Generated environments use gamma (default 0.99);
        a file keeps its own discount unless gamma is given.
        """
        if self.kind is EnvKind.FILE:
            from .store import load_mdp

            mdp = load_mdp(Path(self.path))
            return mdp if gamma is None else replace(mdp, gamma=gamma)
        gamma = DEFAULT_GAMMA if gamma is None else gamma
        if self.kind is EnvKind.SYNTHETIC:
            return make_synthetic(self.n_states, self.n_actions, gamma, self.seed)
        return make_gridworld(self.rows, self.cols, gamma, self.init_mode)

    def to_dict(self) -> dict[str, Any]:
        if self.kind is EnvKind.FILE:
            return {"kind": self.kind.value, "path": self.path}
        if self.kind is EnvKind.SYNTHETIC:
            return {"kind": self.kind.value, "n_states": self.n_states, "n_actions": self.n_actions,
                    "seed": self.seed}
        return {"kind": self.kind.value, "rows": self.rows, "cols": self.cols, "init_mode": self.init_mode.value}


@dataclass(frozen=True)
class TrainConfig:
    """
    One training run. theta_0 is always the zero matrix; q_init None means
    the zero matrix.
    """

    eta_a: float
    eta_c: float
    H: int
    K: int
    lam: float
    seed: int
    eval_every: int = 10
    tau_mode: TauMode = TauMode.AUTO
    tau: Optional[float] = None
    critic_mode: CriticMode = CriticMode.LEARNED
    q_init: Optional[tuple[tuple[float, ...], ...]] = None
    sampler: Sampler = Sampler.OCCUPANCY
    exact_actor_gradient: bool = False
    gamma: Optional[float] = None
    env: EnvSpec = field(default_factory=EnvSpec)

    def __post_init__(self) -> None:
        object.__setattr__(self, "tau_mode", TauMode(self.tau_mode))
        object.__setattr__(self, "critic_mode", CriticMode(self.critic_mode))
        object.__setattr__(self, "sampler", Sampler(self.sampler))
        if self.q_init is not None:
            rows = np.asarray(self.q_init, dtype=np.float64)
            if rows.ndim != 2:
                raise ConfigError("q_init", f"expected an S x A matrix, got shape {rows.shape}")
            object.__setattr__(self, "q_init", tuple(tuple(float(x) for x in row) for row in rows))
        if not self.eta_a > 0.0:
            raise ConfigError("eta_a", f"must be > 0, got {self.eta_a!r}")
        if not self.eta_c >= 0.0:
            raise ConfigError("eta_c", f"must be >= 0, got {self.eta_c!r}")
        if self.H < 1:
            raise ConfigError("H", f"must be >= 1, got {self.H!r}")
        if self.K < 0:
            raise ConfigError("K", f"must be >= 0, got {self.K!r}")
        if not self.lam > 0.0:
            raise ConfigError("lambda", f"must be > 0, got {self.lam!r}")
        if self.eval_every < 1:
            raise ConfigError("eval_every", f"must be >= 1, got {self.eval_every!r}")
        if self.tau_mode is TauMode.FIXED and (self.tau is None or not self.tau > 0.0):
            raise ConfigError("tau", "a positive value is required when tau_mode is fixed")
        if self.gamma is not None and not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma", f"must be in (0, 1), got {self.gamma!r}")

    def resolve_tau(self, mdp: TabularMdp) -> Tau:
        if self.tau_mode is TauMode.FIXED:
            limit = 1.0 / (2.0 * mdp.n_actions ** 2)
            if self.tau >= limit:
                raise ConfigError("tau", f"must be below 1/(2|A|^2) = {limit!r} for this MDP, got {self.tau!r}")
            return Tau.fixed(self.tau)
        if self.tau_mode is TauMode.DISABLED:
            return Tau.disabled()
        return tau_lambda(mdp, self.lam)

    def build_mdp(self) -> TabularMdp:
        return self.env.build(self.gamma)

    def initial_q(self, n_states: int, n_actions: int) -> np.ndarray:
        """
        The critic's starting matrix.

        Raises:
            ValueError: If a given q_init does not have shape (n_states, n_actions)
        """
        if self.q_init is None:
            return np.zeros((n_states, n_actions))
        q = np.array(self.q_init, dtype=np.float64)
        if q.shape != (n_states, n_actions):
            raise ConfigError("q_init", f"shape {q.shape} does not match the MDP ({n_states}, {n_actions})")
        return q

    def to_dict(self) -> dict[str, Any]:
        """Document form; parse_config(config.to_dict()) gives an equal config."""
        out: dict[str, Any] = {
            "eta_a": self.eta_a,
            "eta_c": self.eta_c,
            "H": self.H,
            "K": self.K,
            "lambda": self.lam,
            "seed": self.seed,
            "eval_every": self.eval_every,
            "tau_mode": self.tau_mode.value,
            "critic_mode": self.critic_mode.value,
            "q_init": "zeros" if self.q_init is None else [list(row) for row in self.q_init],
            "sampler": self.sampler.value,
            "exact_actor_gradient": self.exact_actor_gradient,
            "env": self.env.to_dict(),
        }
        if self.tau is not None:
            out["tau"] = self.tau
        if self.gamma is not None:
            out["gamma"] = self.gamma
        return out


@dataclass(frozen=True)
class SweepSpec:
    """A grid-searched H sweep: per H, pick step sizes on pilot seeds, then run n_seeds."""

    H_list: list[int]
    eta_a_grid: list[float]
    eta_c_grid: list[float]
    lam: float
    n_seeds: int
    K: int
    gamma: Optional[float] = None
    env: EnvSpec = field(default_factory=EnvSpec)
    eval_every: int = 10
    include_exact_oracle: bool = True
    out_dir: str = "runs/sweep"
    base_seed: int = 0
    pilot_seeds: int = 5
    tau_mode: TauMode = TauMode.AUTO
    tau: Optional[float] = None
    sampler: Sampler = Sampler.OCCUPANCY

    def train_config(self, seed: int, eta_a: float, eta_c: float, H: int = 1,
                     critic_mode: CriticMode = CriticMode.LEARNED) -> TrainConfig:
        return TrainConfig(
            eta_a=eta_a, eta_c=eta_c, H=H, K=self.K, lam=self.lam, seed=seed, eval_every=self.eval_every,
            tau_mode=self.tau_mode, tau=self.tau, critic_mode=critic_mode, sampler=self.sampler,
            gamma=self.gamma, env=self.env,
        )

    def seed(self, i: int) -> int:
        return self.base_seed + i

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "H_list": list(self.H_list),
            "eta_a_grid": list(self.eta_a_grid),
            "eta_c_grid": list(self.eta_c_grid),
            "lambda": self.lam,
            "n_seeds": self.n_seeds,
            "K": self.K,
            "env": self.env.to_dict(),
            "eval_every": self.eval_every,
            "include_exact_oracle": self.include_exact_oracle,
            "out_dir": self.out_dir,
            "base_seed": self.base_seed,
            "pilot_seeds": self.pilot_seeds,
            "tau_mode": self.tau_mode.value,
            "sampler": self.sampler.value,
        }
        if self.tau is not None:
            out["tau"] = self.tau
        if self.gamma is not None:
            out["gamma"] = self.gamma
        return out


TRAIN_KEYS = frozenset({
    "eta_a", "eta_c", "H", "K", "lambda", "seed", "eval_every", "tau_mode", "tau", "critic_mode", "q_init",
    "sampler", "exact_actor_gradient", "gamma", "env",
})
SWEEP_KEYS = frozenset({
    "H_list", "eta_a_grid", "eta_c_grid", "lambda", "n_seeds", "K", "gamma", "env", "eval_every",
    "include_exact_oracle", "out_dir", "base_seed", "pilot_seeds", "tau_mode", "tau", "sampler",
})
ENV_KEYS = {
    EnvKind.GRIDWORLD: frozenset({"kind", "rows", "cols", "init_mode"}),
    EnvKind.SYNTHETIC: frozenset({"kind", "n_states", "n_actions", "seed"}),
    EnvKind.FILE: frozenset({"kind", "path"}),
}


def _check_keys(document: Mapping[str, Any], allowed: frozenset[str], prefix: str = "") -> None:
    for key in document:
        if key not in allowed:
            raise ConfigError(prefix + key, "unknown key")


def _int(document: Mapping[str, Any], key: str, minimum: int, default: Any = ..., prefix: str = "") -> int:
    if key not in document:
        if default is ...:
            raise ConfigError(prefix + key, "required key is missing")
        return default
    value = document[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(prefix + key, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(prefix + key, f"must be >= {minimum}, got {value!r}")
    return value


def _float(document: Mapping[str, Any], key: str, positive: bool = True, default: Any = ...,
           prefix: str = "") -> Optional[float]:
    if key not in document:
        if default is ...:
            raise ConfigError(prefix + key, "required key is missing")
        return default
    value = document[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
        raise ConfigError(prefix + key, f"expected a finite number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(prefix + key, f"must be > 0, got {value!r}")
    return float(value)


def _bool(document: Mapping[str, Any], key: str, default: bool) -> bool:
    value = document.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError(key, f"expected true or false, got {value!r}")
    return value


def _choice(document: Mapping[str, Any], key: str, enum: type, default: Any, prefix: str = "") -> Any:
    value = document.get(key, default)
    try:
        return enum(value)
    except ValueError:
        options = ", ".join(member.value for member in enum)
        raise ConfigError(prefix + key, f"expected one of {options}, got {value!r}") from None


def _gamma(document: Mapping[str, Any]) -> Optional[float]:
    gamma = _float(document, "gamma", default=None)
    if gamma is not None and not gamma < 1.0:
        raise ConfigError("gamma", f"must be in (0, 1), got {gamma!r}")
    return gamma


def _number_list(document: Mapping[str, Any], key: str, integer: bool) -> list:
    if key not in document:
        raise ConfigError(key, "required key is missing")
    values = document[key]
    if not isinstance(values, list) or not values:
        raise ConfigError(key, f"expected a nonempty list, got {values!r}")
    indexed = {str(i): v for i, v in enumerate(values)}
    if integer:
        return [_int(indexed, str(i), 1, prefix=f"{key}.") for i in range(len(values))]
    return [_float(indexed, str(i), prefix=f"{key}.") for i in range(len(values))]


def parse_env(document: Any) -> EnvSpec:
    if document is None:
        return EnvSpec()
    if not isinstance(document, dict):
        raise ConfigError("env", f"expected an object, got {document!r}")
    kind = _choice(document, "kind", EnvKind, EnvKind.GRIDWORLD, prefix="env.")
    _check_keys(document, ENV_KEYS[kind], prefix="env.")
    if kind is EnvKind.FILE:
        path = document.get("path")
        if not isinstance(path, str) or not path:
            raise ConfigError("env.path", f"expected a file path, got {path!r}")
        return EnvSpec(kind=kind, path=path)
    if kind is EnvKind.SYNTHETIC:
        return EnvSpec(
            kind=kind,
            n_states=_int(document, "n_states", 1, prefix="env."),
            n_actions=_int(document, "n_actions", 1, prefix="env."),
            seed=_int(document, "seed", 0, default=0, prefix="env."),
        )
    rows = _int(document, "rows", 1, default=2, prefix="env.")
    cols = _int(document, "cols", 1, default=2, prefix="env.")
    if rows * cols < 2:
        raise ConfigError("env.rows", f"gridworld needs at least 2 cells, got {rows}x{cols}")
    init_mode = _choice(document, "init_mode", InitMode, InitMode.START_CELL, prefix="env.")
    return EnvSpec(kind=kind, rows=rows, cols=cols, init_mode=init_mode)


def _q_init(document: Mapping[str, Any]) -> Optional[np.ndarray]:
    value = document.get("q_init", "zeros")
    if isinstance(value, str):
        if value != "zeros":
            raise ConfigError("q_init", f"expected \"zeros\" or a matrix, got {value!r}")
        return None
    try:
        matrix = np.array(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise ConfigError("q_init", "expected \"zeros\" or a matrix of numbers") from None
    if matrix.ndim != 2 or not np.isfinite(matrix).all():
        raise ConfigError("q_init", "expected \"zeros\" or a finite S x A matrix")
    return matrix


def _tau(document: Mapping[str, Any]) -> tuple[TauMode, Optional[float]]:
    tau_mode = _choice(document, "tau_mode", TauMode, TauMode.AUTO)
    tau = _float(document, "tau", default=None)
    if tau_mode is TauMode.FIXED and tau is None:
        raise ConfigError("tau", "required when tau_mode is fixed")
    if tau_mode is not TauMode.FIXED and tau is not None:
        raise ConfigError("tau", "only allowed when tau_mode is fixed")
    return tau_mode, tau


def _parse_train(document: Mapping[str, Any]) -> TrainConfig:
    _check_keys(document, TRAIN_KEYS)
    tau_mode, tau = _tau(document)
    return TrainConfig(
        eta_a=_float(document, "eta_a"),
        eta_c=_float(document, "eta_c"),
        H=_int(document, "H", 1),
        K=_int(document, "K", 0),
        lam=_float(document, "lambda"),
        seed=_int(document, "seed", 0),
        eval_every=_int(document, "eval_every", 1, default=10),
        tau_mode=tau_mode,
        tau=tau,
        critic_mode=_choice(document, "critic_mode", CriticMode, CriticMode.LEARNED),
        q_init=_q_init(document),
        sampler=_choice(document, "sampler", Sampler, Sampler.OCCUPANCY),
        exact_actor_gradient=_bool(document, "exact_actor_gradient", False),
        gamma=_gamma(document),
        env=parse_env(document.get("env")),
    )


def _parse_sweep(document: Mapping[str, Any]) -> SweepSpec:
    _check_keys(document, SWEEP_KEYS)
    tau_mode, tau = _tau(document)
    out_dir = document.get("out_dir", "runs/sweep")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("out_dir", f"expected a directory path, got {out_dir!r}")
    return SweepSpec(
        H_list=_number_list(document, "H_list", integer=True),
        eta_a_grid=_number_list(document, "eta_a_grid", integer=False),
        eta_c_grid=_number_list(document, "eta_c_grid", integer=False),
        lam=_float(document, "lambda"),
        n_seeds=_int(document, "n_seeds", 1),
        K=_int(document, "K", 0),
        gamma=_gamma(document),
        env=parse_env(document.get("env")),
        eval_every=_int(document, "eval_every", 1, default=10),
        include_exact_oracle=_bool(document, "include_exact_oracle", True),
        out_dir=out_dir,
        base_seed=_int(document, "base_seed", 0, default=0),
        pilot_seeds=_int(document, "pilot_seeds", 1, default=5),
        tau_mode=tau_mode,
        tau=tau,
        sampler=_choice(document, "sampler", Sampler, Sampler.OCCUPANCY),
    )


def is_sweep_document(document: Mapping[str, Any]) -> bool:
    return "H_list" in document


def parse_config(document: Any) -> Union[TrainConfig, SweepSpec]:
    """
    Parse a train or sweep document; a document with an H_list is a sweep.

    Raises:
        ConfigError: On unknown keys, missing required keys or invalid values
    """
    if not isinstance(document, dict):
        raise ConfigError("<document>", f"expected a JSON object, got {type(document).__name__}")
    if is_sweep_document(document):
        return _parse_sweep(document)
    return _parse_train(document)


def parse_problem(document: Any) -> tuple[EnvSpec, Optional[float], float]:
    """
    The planning problem of any document: (env, gamma, lambda). Algorithm
    keys are ignored.
    """
    if not isinstance(document, dict):
        raise ConfigError("<document>", f"expected a JSON object, got {type(document).__name__}")
    return parse_env(document.get("env")), _gamma(document), _float(document, "lambda")


def apply_env_overrides(document: dict[str, Any], environ: Optional[Mapping[str, str]] = None) -> dict[str, Any]:
    """
    Return a copy of document with ENTAC_<KEY> overrides applied.

    Keys match case-insensitively against the valid top-level keys for the
    document type. Values are decoded as JSON, falling back to the raw
    string.
    """
    environ = os.environ if environ is None else environ
    allowed = SWEEP_KEYS if is_sweep_document(document) else TRAIN_KEYS
    by_lower = {key.lower(): key for key in allowed}
    out = dict(document)
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = by_lower.get(name[len(ENV_PREFIX):].lower())
        if key is None:
            continue
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def read_document(path: Path) -> dict[str, Any]:
    """
    Read a JSON configuration document.

    Raises:
        ConfigError: If the file is missing or not valid JSON
    """
    path = Path(path)
    try:
        with path.open() as f:
            return json.load(f)
    except FileNotFoundError:
        raise ConfigError(str(path), "file not found") from None
    except json.JSONDecodeError as e:
        raise ConfigError(str(path), f"invalid JSON ({e})") from None


def load_config(path: Path, environ: Optional[Mapping[str, str]] = None) -> Union[TrainConfig, SweepSpec]:
    """Read a document, apply environment overrides (after load_dotenv) and parse it."""
    load_dotenv()
    return parse_config(apply_env_overrides(read_document(path), environ))
