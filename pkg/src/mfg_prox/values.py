"""Backward induction for KL-regularized policy evaluation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import _check_flow, _check_policy, forward_flow, kl_rows, regularized_reward
from .model import Array, MfgModel, reward_table

__all__ = [
    "QTable",
    "backward_values",
    "value_identity_gap",
    "regularized_advantage",
]


@dataclass(frozen=True)
class QTable:
    """State-action values ``q[h, s, a]`` and state values ``v[h, s]``.

    ``v`` has horizon + 1 rows; the terminal row is identically zero.
    """

    q: Array
    v: Array


def backward_values(
    model: MfgModel, mu: Array, policy: Array, anchor: Array, kl_weight: float = 0.0
) -> QTable:
    """One backward sweep of the regularized Bellman evaluation under ``policy``.

    q[h] = r(., ., mu[h]) + transitions[h] @ v[h+1], and
    v[h] = <q[h], policy[h]> - kl_weight * KL(policy[h] || anchor[h]).
    The KL penalty enters the state value only, never the state-action value
    of the same step.
    """
    policy = _check_policy(model, policy)
    anchor = _check_policy(model, anchor, name="anchor")
    mu = _check_flow(model, mu)
    if kl_weight < 0.0:
        raise ValueError("kl_weight must be nonnegative")
    if kl_weight > 0.0 and np.any(anchor <= 0.0):
        raise ValueError("anchor must have full support when kl_weight > 0")

    horizon, num_states, num_actions = model.horizon, model.num_states, model.num_actions
    q = np.empty((horizon, num_states, num_actions))
    v = np.zeros((horizon + 1, num_states))
    for h in reversed(range(horizon)):
        q[h] = reward_table(model, h, mu[h]) + model.transitions[h] @ v[h + 1]
        v[h] = (q[h] * policy[h]).sum(axis=-1)
        if kl_weight > 0.0:
            v[h] -= kl_weight * kl_rows(policy[h], anchor[h])
    return QTable(q=q, v=v)


def value_identity_gap(
    model: MfgModel, policy: Array, anchor: Array, kl_weight: float
) -> float:
    """|regularized reward - E_{s ~ mu_1}[v[0](s)]| at mu = flow of ``policy``.

    Zero up to rounding for every model, policy, full-support anchor and
    nonnegative kl_weight; a nonzero gap indicates an evaluation bug.
    """
    flow = forward_flow(model, policy)
    direct = regularized_reward(model, flow, policy, anchor, kl_weight)
    tables = backward_values(model, flow, policy, anchor, kl_weight)
    via_values = float(tables.v[0] @ model.initial_distribution)
    return abs(direct - via_values)


def regularized_advantage(
    tables: QTable, policy: Array, anchor: Array, kl_weight: float
) -> Array:
    """Gain table q - kl_weight * log(policy / anchor), the mirror-flow drift.

    With ``kl_weight`` zero this is exactly ``tables.q``; otherwise both the
    policy and the anchor must have full support.
    """
    if kl_weight < 0.0:
        raise ValueError("kl_weight must be nonnegative")
    if kl_weight == 0.0:
        return np.array(tables.q, dtype=np.float64)
    policy = np.asarray(policy, dtype=np.float64)
    anchor = np.asarray(anchor, dtype=np.float64)
    if policy.shape != tables.q.shape or anchor.shape != tables.q.shape:
        raise ValueError("policy and anchor must match the q table's shape")
    if np.any(policy <= 0.0) or np.any(anchor <= 0.0):
        raise ValueError("policy and anchor must have full support when kl_weight > 0")
    return tables.q - kl_weight * (np.log(policy) - np.log(anchor))
