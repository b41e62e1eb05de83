"""Shared builders for randomized test instances."""
from __future__ import annotations

import numpy as np

from mfg_prox import MfgModel, table_reward


def random_transitions(
    rng: np.random.Generator, horizon: int, num_states: int, num_actions: int
) -> np.ndarray:
    """Dirichlet rows: stochastic and fully supported, so every state is reachable."""
    return rng.dirichlet(np.ones(num_states), size=(horizon, num_states, num_actions))


def random_table_model(
    rng: np.random.Generator,
    num_states: int = 3,
    num_actions: int = 2,
    horizon: int = 3,
    *,
    low: float = 0.0,
    high: float = 1.0,
    crowd_penalty: bool = False,
) -> MfgModel:
    coeff = rng.uniform(low, high, size=(horizon, num_states, num_actions))
    return MfgModel(
        num_states=num_states,
        num_actions=num_actions,
        horizon=horizon,
        transitions=random_transitions(rng, horizon, num_states, num_actions),
        reward=table_reward(coeff, crowd_penalty=crowd_penalty),
        initial_distribution=rng.dirichlet(np.ones(num_states)),
    )


def zero_reward_model(
    rng: np.random.Generator, num_states: int = 3, num_actions: int = 2, horizon: int = 3
) -> MfgModel:
    coeff = np.zeros((horizon, num_states, num_actions))
    return MfgModel(
        num_states=num_states,
        num_actions=num_actions,
        horizon=horizon,
        transitions=random_transitions(rng, horizon, num_states, num_actions),
        reward=table_reward(coeff),
        initial_distribution=rng.dirichlet(np.ones(num_states)),
    )
