"""Tabular mean-field game equilibrium solver.

Proximal-point outer loop approximated by a regularized mirror-descent inner
loop, with exploitability-based evaluation and a beach-bar benchmark.  The
experiment harness lives in :mod:`mfg_prox.cli` and the figure/CSV writers in
:mod:`mfg_prox.reporting`; neither is imported here so that library use does
not pull in matplotlib.
"""
from .dynamics import cumulative_reward, forward_flow, regularized_reward, tv_distance, weighted_kl
from .evaluation import (
    BestResponseResult,
    best_response,
    brute_force_equilibrium_check,
    distance_to_policy_set,
    exploitability,
)
from .model import (
    MfgModel,
    RewardModel,
    Violation,
    beach_bar_model,
    check_weak_monotonicity,
    load_model,
    model_from_json,
    model_to_json,
    random_policy,
    reward_table,
    save_model,
    table_reward,
    uniform_policy,
    validate_model,
    validate_policy,
)
from .solvers import (
    ConvergenceTrace,
    MirrorFlowPath,
    SolverConfig,
    TraceRecord,
    mirror_flow_integrate,
    mirror_weights_update,
    pp_solve,
    rmd_first_order_residual,
    rmd_solve,
    rmd_step,
    step_size_bound,
)
from .values import QTable, backward_values, regularized_advantage, value_identity_gap

__version__ = "0.1.0"

__all__ = [
    "BestResponseResult",
    "ConvergenceTrace",
    "MfgModel",
    "MirrorFlowPath",
    "QTable",
    "RewardModel",
    "SolverConfig",
    "TraceRecord",
    "Violation",
    "backward_values",
    "beach_bar_model",
    "best_response",
    "brute_force_equilibrium_check",
    "check_weak_monotonicity",
    "cumulative_reward",
    "distance_to_policy_set",
    "exploitability",
    "forward_flow",
    "load_model",
    "mirror_flow_integrate",
    "mirror_weights_update",
    "model_from_json",
    "model_to_json",
    "pp_solve",
    "random_policy",
    "regularized_advantage",
    "regularized_reward",
    "reward_table",
    "rmd_first_order_residual",
    "rmd_solve",
    "rmd_step",
    "save_model",
    "step_size_bound",
    "table_reward",
    "tv_distance",
    "uniform_policy",
    "validate_model",
    "validate_policy",
    "value_identity_gap",
    "weighted_kl",
]
