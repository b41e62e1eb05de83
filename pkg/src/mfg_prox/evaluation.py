"""Best responses, exploitability, and brute-force equilibrium checking."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import _check_policy, cumulative_reward, forward_flow
from .model import Array, MfgModel, reward_table

__all__ = [
    "BestResponseResult",
    "best_response",
    "exploitability",
    "distance_to_policy_set",
    "brute_force_equilibrium_check",
]

# Candidate cap for the brute-force deviation search.
BRUTE_FORCE_LIMIT = 10**6


@dataclass(frozen=True)
class BestResponseResult:
    """Deterministic optimal deviation against a fixed flow, and its value."""

    policy: Array
    value: float


def best_response(model: MfgModel, mu: Array) -> BestResponseResult:
    """Greedy backward induction against the fixed flow ``mu``.

    The objective is linear in the policy, so a deterministic maximiser
    exists; ties are broken toward the lowest action index.  Returns the
    one-hot policy and its expected total reward from the initial law.
    """
    mu = np.asarray(mu, dtype=np.float64)
    expected = (model.horizon, model.num_states)
    if mu.shape != expected:
        raise ValueError(f"mu shape {mu.shape}, expected {expected}")

    horizon, num_states, num_actions = model.horizon, model.num_states, model.num_actions
    policy = np.zeros((horizon, num_states, num_actions))
    future = np.zeros(num_states)
    for h in reversed(range(horizon)):
        q = reward_table(model, h, mu[h]) + model.transitions[h] @ future
        greedy = q.argmax(axis=-1)
        policy[h, np.arange(num_states), greedy] = 1.0
        future = q[np.arange(num_states), greedy]
    return BestResponseResult(policy=policy, value=float(future @ model.initial_distribution))


def exploitability(model: MfgModel, policy: Array) -> float:
    """Best deviation gain against the crowd that follows ``policy``.

    max_{pi'} J(m[policy], pi') - J(m[policy], policy); zero exactly at an
    equilibrium, nonnegative up to rounding everywhere.
    """
    policy = _check_policy(model, policy)
    flow = forward_flow(model, policy)
    best = best_response(model, flow)
    return best.value - cumulative_reward(model, flow, policy)


def distance_to_policy_set(policy: Array, reference_set: list[Array]) -> float:
    """min over references of sum_{h,s} || policy_h(.|s) - ref_h(.|s) ||_1."""
    if len(reference_set) == 0:
        raise ValueError("reference_set must be nonempty")
    policy = np.asarray(policy, dtype=np.float64)
    best = np.inf
    for ref in reference_set:
        ref = np.asarray(ref, dtype=np.float64)
        if ref.shape != policy.shape:
            raise ValueError(f"reference shape {ref.shape} != policy shape {policy.shape}")
        best = min(best, float(np.abs(policy - ref).sum()))
    return best


def _simplex_grid(num_actions: int, resolution: int) -> list[Array]:
    """All action distributions whose entries are multiples of 1/resolution."""
    rows: list[Array] = []

    def extend(prefix: list[int], remaining: int, slots: int) -> None:
        if slots == 1:
            rows.append(np.array(prefix + [remaining], dtype=np.float64) / resolution)
            return
        for count in range(remaining + 1):
            extend(prefix + [count], remaining - count, slots - 1)

    extend([], resolution, num_actions)
    return rows


def brute_force_equilibrium_check(
    model: MfgModel, policy: Array, grid_resolution: int = 1
) -> float:
    """Exploitability by exhaustive deviation search, for small instances.

    Candidates are every policy whose rows lie on the simplex grid with
    denominator ``grid_resolution``; resolution 1 is exactly the set of
    deterministic policies.  Each candidate is scored by pushing its own flow
    forward, independently of the backward induction used elsewhere.  Raises
    when the candidate count would exceed one million.
    """
    if grid_resolution < 1:
        raise ValueError("grid_resolution must be >= 1")
    policy = _check_policy(model, policy)

    horizon, num_states, num_actions = model.horizon, model.num_states, model.num_actions
    rows = _simplex_grid(num_actions, grid_resolution)
    num_rows = math.comb(grid_resolution + num_actions - 1, num_actions - 1)
    candidates = num_rows ** (horizon * num_states)
    if candidates > BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"{candidates} candidate policies exceed the {BRUTE_FORCE_LIMIT} cap"
        )

    flow = forward_flow(model, policy)
    rewards = [reward_table(model, h, flow[h]) for h in range(horizon)]
    base = cumulative_reward(model, flow, policy)

    best = -np.inf
    for combo in itertools.product(range(num_rows), repeat=horizon * num_states):
        candidate = np.stack([rows[i] for i in combo]).reshape(horizon, num_states, num_actions)
        mass = model.initial_distribution
        value = 0.0
        for h in range(horizon):
            occupancy = mass[:, None] * candidate[h]
            value += float((occupancy * rewards[h]).sum())
            if h + 1 < horizon:
                mass = np.einsum("sa,sat->t", occupancy, model.transitions[h])
        best = max(best, value)
    return best - base
