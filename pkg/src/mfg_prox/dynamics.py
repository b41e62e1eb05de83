"""Population flow, cumulative reward functionals, and divergences between policies."""
from __future__ import annotations

import numpy as np

from .model import Array, MfgModel, reward_table

__all__ = [
    "forward_flow",
    "cumulative_reward",
    "regularized_reward",
    "weighted_kl",
    "kl_rows",
    "tv_distance",
]


def _check_policy(model: MfgModel, policy: Array, name: str = "policy") -> Array:
    policy = np.asarray(policy, dtype=np.float64)
    expected = (model.horizon, model.num_states, model.num_actions)
    if policy.shape != expected:
        raise ValueError(f"{name} shape {policy.shape}, expected {expected}")
    return policy


def _check_flow(model: MfgModel, flow: Array, name: str = "mu") -> Array:
    flow = np.asarray(flow, dtype=np.float64)
    expected = (model.horizon, model.num_states)
    if flow.shape != expected:
        raise ValueError(f"{name} shape {flow.shape}, expected {expected}")
    return flow


def forward_flow(model: MfgModel, policy: Array) -> Array:
    """State-distribution sequence induced by ``policy`` from the initial law.

    Returns an array of shape (horizon, S); row 0 is the initial distribution
    and row h+1 pushes row h through the policy and the step-h kernel.
    """
    policy = _check_policy(model, policy)
    flow = np.empty((model.horizon, model.num_states))
    flow[0] = model.initial_distribution
    for h in range(model.horizon - 1):
        occupancy = flow[h][:, None] * policy[h]
        flow[h + 1] = np.einsum("sa,sat->t", occupancy, model.transitions[h])
    return flow


def cumulative_reward(model: MfgModel, mu: Array, policy: Array) -> float:
    """Expected total reward of ``policy`` when the crowd follows ``mu``.

    Trajectory weights are the flow induced by ``policy`` itself (recomputed
    here); ``mu`` enters only through the reward.
    """
    policy = _check_policy(model, policy)
    mu = _check_flow(model, mu)
    flow = forward_flow(model, policy)
    total = 0.0
    for h in range(model.horizon):
        rewards = reward_table(model, h, mu[h])
        total += float((flow[h][:, None] * policy[h] * rewards).sum())
    return total


def kl_rows(policy: Array, anchor: Array) -> Array:
    """Row-wise KL(policy || anchor) over the last axis.

    Uses the 0 log 0 = 0 convention and returns +inf for rows where the
    policy puts mass outside the anchor's support.
    """
    policy = np.asarray(policy, dtype=np.float64)
    anchor = np.asarray(anchor, dtype=np.float64)
    unsupported = ((policy > 0.0) & (anchor <= 0.0)).any(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(policy > 0.0, policy * (np.log(policy) - np.log(anchor)), 0.0)
    out = terms.sum(axis=-1)
    return np.where(unsupported, np.inf, out)


def weighted_kl(weights: Array, policy: Array, anchor: Array) -> float:
    """Divergence sum_h E_{s ~ weights_h}[ KL(policy_h(s) || anchor_h(s)) ].

    States with zero weight contribute nothing even where the row KL is
    infinite; a positive-weight row with mass off the anchor's support makes
    the result +inf.
    """
    weights = np.asarray(weights, dtype=np.float64)
    policy = np.asarray(policy, dtype=np.float64)
    anchor = np.asarray(anchor, dtype=np.float64)
    if policy.shape != anchor.shape:
        raise ValueError(f"policy shape {policy.shape} != anchor shape {anchor.shape}")
    if weights.shape != policy.shape[:-1]:
        raise ValueError(f"weights shape {weights.shape}, expected {policy.shape[:-1]}")
    rows = kl_rows(policy, anchor)
    with np.errstate(invalid="ignore"):
        contributions = np.where(weights > 0.0, weights * rows, 0.0)
    return float(contributions.sum())


def regularized_reward(
    model: MfgModel, mu: Array, policy: Array, anchor: Array, kl_weight: float
) -> float:
    """Cumulative reward minus ``kl_weight`` times the flow-weighted KL to the anchor.

    The KL is weighted by the flow induced by ``policy`` itself, not by ``mu``.
    """
    if kl_weight < 0.0:
        raise ValueError("kl_weight must be nonnegative")
    policy = _check_policy(model, policy)
    anchor = _check_policy(model, anchor, name="anchor")
    if np.any(anchor <= 0.0):
        raise ValueError("anchor must have full support")
    value = cumulative_reward(model, mu, policy)
    if kl_weight == 0.0:
        return value
    flow = forward_flow(model, policy)
    return value - kl_weight * weighted_kl(flow, policy, anchor)


def tv_distance(p: Array, q: Array) -> float:
    """l1 distance sum_i |p_i - q_i| (no 1/2 factor)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {q.shape}")
    return float(np.abs(p - q).sum())
