"""Finite-horizon mean-field game instances: types, validation, benchmarks, JSON I/O.

An instance is a tuple (states, actions, horizon, transitions, reward, initial
law).  Transition kernels are population-independent; the mean field enters
only through the reward.  Step indices ``h`` run 0 .. horizon-1 throughout.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

Array = np.ndarray

# Shared tolerance for "sums to one" checks on distributions and kernel rows.
SIMPLEX_ATOL = 1e-12

# Beach-bar action set: move one site left, stay, move one site right.
BEACH_BAR_MOVES = (-1, 0, 1)

__all__ = [
    "Array",
    "SIMPLEX_ATOL",
    "BEACH_BAR_MOVES",
    "Violation",
    "RewardModel",
    "MfgModel",
    "reward_table",
    "table_reward",
    "beach_bar_model",
    "validate_model",
    "validate_policy",
    "uniform_policy",
    "random_policy",
    "check_weak_monotonicity",
    "model_to_json",
    "model_from_json",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class Violation:
    """One failed invariant, locating the offending index (0-based, step first)."""

    kind: str
    where: tuple
    detail: str

    def __str__(self) -> str:
        return f"{self.kind}{self.where}: {self.detail}"


@dataclass(frozen=True)
class RewardModel:
    """Reward r_h(s, a, mu_h) with its declared regularity.

    ``evaluate`` is the scalar contract (h, s, a, mu_h) -> float.  The optional
    ``evaluate_all`` returns the whole (S, A) matrix for one step and is used
    by the solvers when present.  ``lipschitz_hint`` is a declared l1-Lipschitz
    constant of the reward in mu; ``mu_floor`` clamps any density dependence
    from below.  ``kind``/``params`` identify serialisable reward families.
    """

    evaluate: Callable[[int, int, int, Array], float]
    lipschitz_hint: float = 0.0
    mu_floor: float = 1e-9
    evaluate_all: Callable[[int, Array], Array] | None = None
    kind: str = "custom"
    params: dict | None = None


@dataclass(frozen=True)
class MfgModel:
    """Tabular mean-field game.

    transitions has shape (horizon, S, A, S); ``transitions[h, s, a]`` is the
    next-state law.  initial_distribution has shape (S,).  Construction only
    enforces shapes; probabilistic invariants are reported by
    :func:`validate_model` so that deliberately broken instances can be built
    and inspected.
    """

    num_states: int
    num_actions: int
    horizon: int
    transitions: Array
    reward: RewardModel
    initial_distribution: Array

    def __post_init__(self) -> None:
        if self.num_states < 1 or self.num_actions < 1 or self.horizon < 1:
            raise ValueError("num_states, num_actions and horizon must be >= 1")
        kernel = np.asarray(self.transitions, dtype=np.float64)
        start = np.asarray(self.initial_distribution, dtype=np.float64)
        expected = (self.horizon, self.num_states, self.num_actions, self.num_states)
        if kernel.shape != expected:
            raise ValueError(f"transitions shape {kernel.shape}, expected {expected}")
        if start.shape != (self.num_states,):
            raise ValueError(
                f"initial_distribution shape {start.shape}, expected ({self.num_states},)"
            )
        kernel = kernel.copy()
        start = start.copy()
        kernel.setflags(write=False)
        start.setflags(write=False)
        object.__setattr__(self, "transitions", kernel)
        object.__setattr__(self, "initial_distribution", start)


def reward_table(model: MfgModel, h: int, mu_h: Array) -> Array:
    """Reward matrix r_h(., ., mu_h) of shape (S, A)."""
    rm = model.reward
    if rm.evaluate_all is not None:
        return np.asarray(rm.evaluate_all(h, mu_h), dtype=np.float64)
    return np.array(
        [
            [rm.evaluate(h, s, a, mu_h) for a in range(model.num_actions)]
            for s in range(model.num_states)
        ],
        dtype=np.float64,
    )


def table_reward(
    coefficients: Array,
    *,
    crowd_penalty: bool = False,
    mu_floor: float = 1e-9,
    lipschitz_hint: float | None = None,
) -> RewardModel:
    """Reward from a (horizon, S, A) coefficient table.

    With ``crowd_penalty`` a term -log(max(mu_h(s), mu_floor)) is added, the
    same aversion-to-crowding shape the beach-bar benchmark uses.
    """
    coeff = np.asarray(coefficients, dtype=np.float64)
    if coeff.ndim != 3:
        raise ValueError(f"coefficients must be (horizon, S, A), got shape {coeff.shape}")
    if mu_floor <= 0.0:
        raise ValueError("mu_floor must be positive")
    if lipschitz_hint is None:
        lipschitz_hint = 1.0 / mu_floor if crowd_penalty else 0.0

    def evaluate_all(h: int, mu_h: Array) -> Array:
        base = coeff[h]
        if crowd_penalty:
            base = base - np.log(np.maximum(mu_h, mu_floor))[:, None]
        return base

    def evaluate(h: int, s: int, a: int, mu_h: Array) -> float:
        value = coeff[h, s, a]
        if crowd_penalty:
            value = value - np.log(max(float(mu_h[s]), mu_floor))
        return float(value)

    return RewardModel(
        evaluate=evaluate,
        lipschitz_hint=float(lipschitz_hint),
        mu_floor=float(mu_floor),
        evaluate_all=evaluate_all,
        kind="table",
        params={"coefficients": coeff, "crowd_penalty": bool(crowd_penalty)},
    )


def _beach_bar_reward(num_states: int, mu_floor: float) -> RewardModel:
    moves = np.abs(np.asarray(BEACH_BAR_MOVES, dtype=np.float64))
    sites = np.arange(num_states, dtype=np.float64)
    bar = num_states // 2
    base = -moves[None, :] / num_states - np.abs(sites - bar)[:, None] / num_states

    def evaluate_all(h: int, mu_h: Array) -> Array:
        return base - np.log(np.maximum(mu_h, mu_floor))[:, None]

    def evaluate(h: int, s: int, a: int, mu_h: Array) -> float:
        return float(base[s, a] - np.log(max(float(mu_h[s]), mu_floor)))

    return RewardModel(
        evaluate=evaluate,
        lipschitz_hint=1.0 / mu_floor,
        mu_floor=float(mu_floor),
        evaluate_all=evaluate_all,
        kind="beach_bar",
        params={"mu_floor": float(mu_floor)},
    )


def beach_bar_model(
    num_states: int,
    horizon: int,
    epsilon: float = 0.1,
    mu_floor: float = 1e-9,
) -> MfgModel:
    """Crowd-on-a-torus benchmark with a bar at site ``num_states // 2``.

    Actions move one site left or right or stay.  The intended move lands with
    probability 1 - epsilon and slips to each torus neighbour of the target
    with probability epsilon / 2.  Reward trades off movement cost, distance
    to the bar, and a -log mu_h(s) crowding penalty clamped at ``mu_floor``.
    The initial law is uniform, which is stationary under the uniform policy.
    """
    if num_states < 2:
        raise ValueError("beach bar needs num_states >= 2")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie strictly between 0 and 1, got {epsilon}")
    if mu_floor <= 0.0:
        raise ValueError("mu_floor must be positive")

    num_actions = len(BEACH_BAR_MOVES)
    kernel = np.zeros((num_states, num_actions, num_states), dtype=np.float64)
    for s in range(num_states):
        for a, move in enumerate(BEACH_BAR_MOVES):
            target = (s + move) % num_states
            kernel[s, a, target] += 1.0 - epsilon
            kernel[s, a, (target + 1) % num_states] += epsilon / 2.0
            kernel[s, a, (target - 1) % num_states] += epsilon / 2.0
    transitions = np.broadcast_to(kernel, (horizon, *kernel.shape)).copy()

    return MfgModel(
        num_states=num_states,
        num_actions=num_actions,
        horizon=horizon,
        transitions=transitions,
        reward=_beach_bar_reward(num_states, mu_floor),
        initial_distribution=np.full(num_states, 1.0 / num_states),
    )


def validate_model(model: MfgModel) -> list[Violation]:
    """Check the probabilistic invariants; returns an empty list when clean.

    Reported kinds: ``horizon`` (< 2), ``initial_distribution`` (negative mass
    or bad total), ``transition`` (negative entry or row sum off by more than
    1e-12, named by (h, s, a)), ``reachability`` (a state no (s, a) pair can
    reach at some step, named by (h, next_state)).
    """
    out: list[Violation] = []
    if model.horizon < 2:
        out.append(Violation("horizon", (), f"horizon {model.horizon} < 2"))

    start = model.initial_distribution
    for (s,) in np.argwhere(start < 0.0):
        out.append(Violation("initial_distribution", (int(s),), f"negative mass {start[s]}"))
    total = float(start.sum())
    if abs(total - 1.0) > SIMPLEX_ATOL:
        out.append(Violation("initial_distribution", (), f"total mass {total!r} != 1"))

    kernel = model.transitions
    for h, s, a, s1 in np.argwhere(kernel < 0.0):
        out.append(
            Violation(
                "transition",
                (int(h), int(s), int(a), int(s1)),
                f"negative probability {kernel[h, s, a, s1]}",
            )
        )
    row_sums = kernel.sum(axis=-1)
    for h, s, a in np.argwhere(np.abs(row_sums - 1.0) > SIMPLEX_ATOL):
        out.append(
            Violation(
                "transition",
                (int(h), int(s), int(a)),
                f"row sums to {row_sums[h, s, a]!r}",
            )
        )
    reachable = (kernel > 0.0).any(axis=(1, 2))
    for h, s1 in np.argwhere(~reachable):
        out.append(
            Violation(
                "reachability",
                (int(h), int(s1)),
                "no (state, action) pair reaches this state",
            )
        )
    return out


def validate_policy(
    policy: Array, model: MfgModel, *, require_full_support: bool = False
) -> list[Violation]:
    """Check that ``policy`` is a (horizon, S, A) stack of action distributions."""
    policy = np.asarray(policy, dtype=np.float64)
    expected = (model.horizon, model.num_states, model.num_actions)
    if policy.shape != expected:
        return [Violation("policy", (), f"shape {policy.shape}, expected {expected}")]
    out: list[Violation] = []
    for h, s, a in np.argwhere(policy < 0.0):
        out.append(
            Violation("policy", (int(h), int(s), int(a)), f"negative probability {policy[h, s, a]}")
        )
    row_sums = policy.sum(axis=-1)
    for h, s in np.argwhere(np.abs(row_sums - 1.0) > SIMPLEX_ATOL):
        out.append(Violation("policy", (int(h), int(s)), f"row sums to {row_sums[h, s]!r}"))
    if require_full_support:
        for h, s, a in np.argwhere(policy <= 0.0):
            out.append(
                Violation("policy", (int(h), int(s), int(a)), "zero mass where full support required")
            )
    return out


def uniform_policy(model: MfgModel) -> Array:
    """The uniform action distribution at every (h, s)."""
    shape = (model.horizon, model.num_states, model.num_actions)
    return np.full(shape, 1.0 / model.num_actions)


def random_policy(model: MfgModel, rng: np.random.Generator, concentration: float = 1.0) -> Array:
    """A policy with rows drawn from a symmetric Dirichlet (full support a.s.)."""
    alpha = np.full(model.num_actions, concentration)
    return rng.dirichlet(alpha, size=(model.horizon, model.num_states))


def check_weak_monotonicity(model: MfgModel, num_samples: int, rng_seed: int) -> float:
    """Worst observed value of the monotonicity pairing over random pairs.

    For pairs (mu, pi) and (mu', pi') with rows drawn uniformly from the
    simplex, evaluates

        sum_{h,s,a} (r_h(s,a,mu_h) - r_h(s,a,mu'_h))
                    (pi_h(a|s) mu_h(s) - pi'_h(a|s) mu'_h(s))

    and returns the maximum.  Nonpositive values over many samples support
    the weak-monotonicity assumption; a positive value refutes it.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    horizon, num_states, num_actions = model.horizon, model.num_states, model.num_actions
    worst = -np.inf
    for _ in range(num_samples):
        mu_a = rng.dirichlet(np.ones(num_states), size=horizon)
        mu_b = rng.dirichlet(np.ones(num_states), size=horizon)
        pol_a = rng.dirichlet(np.ones(num_actions), size=(horizon, num_states))
        pol_b = rng.dirichlet(np.ones(num_actions), size=(horizon, num_states))
        total = 0.0
        for h in range(horizon):
            delta_r = reward_table(model, h, mu_a[h]) - reward_table(model, h, mu_b[h])
            delta_occ = pol_a[h] * mu_a[h][:, None] - pol_b[h] * mu_b[h][:, None]
            total += float((delta_r * delta_occ).sum())
        worst = max(worst, total)
    return worst


def model_to_json(model: MfgModel) -> dict:
    """Serialisable document for a model with a beach-bar or table reward."""
    rm = model.reward
    if rm.kind == "beach_bar":
        reward_doc: dict = {"kind": "beach_bar", "mu_floor": rm.mu_floor}
    elif rm.kind == "table":
        params = rm.params or {}
        reward_doc = {
            "kind": "table",
            "coefficients": np.asarray(params["coefficients"]).tolist(),
            "crowd_penalty": bool(params.get("crowd_penalty", False)),
            "mu_floor": rm.mu_floor,
            "lipschitz_hint": rm.lipschitz_hint,
        }
    else:
        raise ValueError(f"reward kind {rm.kind!r} is not serialisable")
    return {
        "num_states": model.num_states,
        "num_actions": model.num_actions,
        "horizon": model.horizon,
        "transitions": model.transitions.tolist(),
        "initial_distribution": model.initial_distribution.tolist(),
        "reward": reward_doc,
    }


def model_from_json(doc: dict) -> MfgModel:
    """Rebuild a model from :func:`model_to_json` output."""
    try:
        num_states = int(doc["num_states"])
        num_actions = int(doc["num_actions"])
        horizon = int(doc["horizon"])
        transitions = np.asarray(doc["transitions"], dtype=np.float64)
        start = np.asarray(doc["initial_distribution"], dtype=np.float64)
        reward_doc = doc["reward"]
        kind = reward_doc["kind"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed model document: {exc}") from exc

    if kind == "beach_bar":
        reward = _beach_bar_reward(num_states, float(reward_doc.get("mu_floor", 1e-9)))
    elif kind == "table":
        reward = table_reward(
            np.asarray(reward_doc["coefficients"], dtype=np.float64),
            crowd_penalty=bool(reward_doc.get("crowd_penalty", False)),
            mu_floor=float(reward_doc.get("mu_floor", 1e-9)),
            lipschitz_hint=reward_doc.get("lipschitz_hint"),
        )
    else:
        raise ValueError(f"unknown reward kind {kind!r}")

    return MfgModel(
        num_states=num_states,
        num_actions=num_actions,
        horizon=horizon,
        transitions=transitions,
        reward=reward,
        initial_distribution=start,
    )


def save_model(model: MfgModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_json(model)))


def load_model(path: str | Path) -> MfgModel:
    return model_from_json(json.loads(Path(path).read_text()))
