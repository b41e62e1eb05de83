"""Regularized mirror-descent inner loop, proximal-point outer loop, diagnostics.

The inner loop repeats a closed-form multiplicative update toward the anchor
policy; the outer loop re-anchors at the current iterate.  ``step_size_bound``
evaluates the theoretical step-size cap in log space, and
``mirror_flow_integrate`` follows the continuous-time analogue of the update.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import forward_flow, weighted_kl
from .evaluation import exploitability
from .model import Array, MfgModel
from .values import QTable, backward_values, regularized_advantage

__all__ = [
    "SolverConfig",
    "TraceRecord",
    "ConvergenceTrace",
    "MirrorFlowPath",
    "mirror_weights_update",
    "rmd_step",
    "rmd_first_order_residual",
    "rmd_solve",
    "pp_solve",
    "step_size_bound",
    "mirror_flow_integrate",
]

# Hard cap on the explicit integrator's step, below which the simplex
# interior is preserved for the value scales this package targets.
MAX_FLOW_DT = 1e-2


@dataclass(frozen=True)
class SolverConfig:
    """Shared knobs for the inner and outer loops.

    ``kl_weight`` (the proximal strength) times ``step_size`` must stay below
    one for the multiplicative update to be well defined.  ``inner_iters`` and
    ``outer_iters`` may be zero, in which case the corresponding loop returns
    its input unchanged.  ``record_every`` thins inner-loop trace records;
    ``mu_floor`` is forwarded to reward construction by the experiment runner.
    """

    kl_weight: float
    step_size: float
    inner_iters: int
    outer_iters: int = 1
    mu_floor: float = 1e-9
    record_every: int = 1

    def __post_init__(self) -> None:
        if self.kl_weight <= 0.0:
            raise ValueError("kl_weight must be positive")
        if self.step_size <= 0.0:
            raise ValueError("step_size must be positive")
        if self.kl_weight * self.step_size >= 1.0:
            raise ValueError(
                f"kl_weight * step_size = {self.kl_weight * self.step_size} must be < 1"
            )
        if self.inner_iters < 0 or self.outer_iters < 0:
            raise ValueError("iteration counts must be nonnegative")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.mu_floor <= 0.0:
            raise ValueError("mu_floor must be positive")


@dataclass(frozen=True)
class TraceRecord:
    """One trace point; ``exploitability`` and ``kl_step`` are NaN when not evaluated."""

    outer_k: int
    inner_t: int
    exploitability: float
    kl_step: float
    wall_clock_ms: float


@dataclass
class ConvergenceTrace:
    """Records ordered by (outer_k, inner_t), plus optional policy snapshots."""

    records: list[TraceRecord] = field(default_factory=list)
    policy_snapshots: list[tuple[int, int, Array]] = field(default_factory=list)


def _require_full_support(arr: Array, name: str) -> None:
    if np.any(arr <= 0.0):
        raise ValueError(f"{name} must have full support")


def mirror_weights_update(
    policy: Array, anchor: Array, qvalues: Array, kl_weight: float, step_size: float
) -> Array:
    """Closed-form inner update, computed in log space.

    Row-wise proportional to anchor^(kl_weight * step_size)
    * policy^(1 - kl_weight * step_size) * exp(step_size * q); invariant to
    adding action-independent constants to ``qvalues``.
    """
    if kl_weight < 0.0 or step_size <= 0.0:
        raise ValueError("kl_weight must be nonnegative and step_size positive")
    mix = kl_weight * step_size
    if mix >= 1.0:
        raise ValueError(f"kl_weight * step_size = {mix} must be < 1")
    policy = np.asarray(policy, dtype=np.float64)
    anchor = np.asarray(anchor, dtype=np.float64)
    _require_full_support(policy, "policy")
    if mix == 0.0:
        logits = np.log(policy) + step_size * qvalues
    else:
        _require_full_support(anchor, "anchor")
        logits = mix * np.log(anchor) + (1.0 - mix) * np.log(policy) + step_size * qvalues
    logits = logits - logits.max(axis=-1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=-1, keepdims=True)


def _rmd_step_full(
    model: MfgModel, policy: Array, anchor: Array, kl_weight: float, step_size: float
) -> tuple[Array, Array, QTable]:
    """One inner step; also returns the pre-step flow and value tables."""
    flow = forward_flow(model, policy)
    tables = backward_values(model, flow, policy, anchor, kl_weight)
    updated = mirror_weights_update(policy, anchor, tables.q, kl_weight, step_size)
    return updated, flow, tables


def rmd_step(
    model: MfgModel, policy: Array, anchor: Array, kl_weight: float, step_size: float
) -> Array:
    """One regularized mirror-descent step from ``policy`` toward its update.

    Evaluates the current policy against its own flow, then reweights each
    action row by exp(step_size * q) with a geometric pull toward the anchor.
    The output has full support and rows normalized to one.
    """
    return _rmd_step_full(model, policy, anchor, kl_weight, step_size)[0]


def rmd_first_order_residual(
    model: MfgModel,
    old_policy: Array,
    new_policy: Array,
    anchor: Array,
    kl_weight: float,
    step_size: float,
) -> float:
    """Stationarity defect of ``new_policy`` as the update of ``old_policy``.

    For each (h, s) forms
    step_size * (q - kl_weight * log(new / anchor))
    - (1 - kl_weight * step_size) * log(new / old)
    with q evaluated at the old policy's flow, and returns the largest spread
    of that vector over actions.  The exact update makes every such vector
    constant, so the spread vanishes up to rounding.
    """
    old_policy = np.asarray(old_policy, dtype=np.float64)
    new_policy = np.asarray(new_policy, dtype=np.float64)
    anchor = np.asarray(anchor, dtype=np.float64)
    _require_full_support(old_policy, "old_policy")
    _require_full_support(new_policy, "new_policy")
    _require_full_support(anchor, "anchor")
    flow = forward_flow(model, old_policy)
    tables = backward_values(model, flow, old_policy, anchor, kl_weight)
    first_order = step_size * (
        tables.q - kl_weight * (np.log(new_policy) - np.log(anchor))
    ) - (1.0 - kl_weight * step_size) * (np.log(new_policy) - np.log(old_policy))
    spread = first_order.max(axis=-1) - first_order.min(axis=-1)
    return float(spread.max())


def _run_inner_loop(
    model: MfgModel,
    policy: Array,
    anchor: Array,
    config: SolverConfig,
    trace: ConvergenceTrace,
    *,
    outer_k: int,
    record_initial: bool,
    exploit_mode: str,
    snapshot_policies: bool,
    started: float,
) -> Array:
    """Shared inner loop.  ``exploit_mode``: 'recorded' scores every recorded
    step, 'final' only the last one."""

    def elapsed_ms() -> float:
        return (time.perf_counter() - started) * 1e3

    def snap(t: int, pol: Array) -> None:
        if snapshot_policies:
            trace.policy_snapshots.append((outer_k, t, pol.copy()))

    policy = np.array(policy, dtype=np.float64)
    if record_initial:
        score = exploitability(model, policy) if exploit_mode == "recorded" else np.nan
        trace.records.append(TraceRecord(outer_k, 0, score, np.nan, elapsed_ms()))
        snap(0, policy)

    total = config.inner_iters
    for t in range(1, total + 1):
        updated, pre_flow, _ = _rmd_step_full(
            model, policy, anchor, config.kl_weight, config.step_size
        )
        if t % config.record_every == 0 or t == total:
            kl_step = weighted_kl(pre_flow, updated, policy)
            want_score = exploit_mode == "recorded" or (exploit_mode == "final" and t == total)
            score = exploitability(model, updated) if want_score else np.nan
            trace.records.append(TraceRecord(outer_k, t, score, kl_step, elapsed_ms()))
            snap(t, updated)
        policy = updated
    return policy


def rmd_solve(
    model: MfgModel,
    init: Array,
    anchor: Array,
    config: SolverConfig,
    *,
    snapshot_policies: bool = False,
) -> tuple[Array, ConvergenceTrace]:
    """Run ``config.inner_iters`` mirror-descent steps from ``init``.

    The anchor stays fixed throughout.  The trace starts with a record for the
    initial policy and then one per ``record_every`` steps (the final step is
    always recorded); every record carries the exploitability and the
    flow-weighted KL of the step just taken.  Zero iterations return ``init``
    unchanged.
    """
    trace = ConvergenceTrace()
    final = _run_inner_loop(
        model,
        init,
        np.asarray(anchor, dtype=np.float64),
        config,
        trace,
        outer_k=0,
        record_initial=True,
        exploit_mode="recorded",
        snapshot_policies=snapshot_policies,
        started=time.perf_counter(),
    )
    return final, trace


def pp_solve(
    model: MfgModel,
    init: Array,
    config: SolverConfig,
    *,
    snapshot_policies: bool = False,
) -> tuple[Array, ConvergenceTrace]:
    """Proximal-point outer loop approximated by mirror-descent inner loops.

    Outer step k re-anchors the inner loop at the current policy and warm
    starts from it.  Exploitability, the expensive metric, is evaluated once
    per outer step (at the last inner iterate); intermediate inner records
    carry step KLs only.  Zero outer steps return ``init`` unchanged.
    """
    trace = ConvergenceTrace()
    started = time.perf_counter()
    policy = np.array(init, dtype=np.float64)
    for k in range(config.outer_iters):
        policy = _run_inner_loop(
            model,
            policy,
            policy,
            config,
            trace,
            outer_k=k,
            record_initial=False,
            exploit_mode="final",
            snapshot_policies=snapshot_policies,
            started=started,
        )
    return policy, trace


def step_size_bound(
    kl_weight: float,
    anchor_min: float,
    horizon: int,
    num_actions: int,
    reward_lipschitz: float,
) -> tuple[float, float]:
    """Theoretical inner-loop step-size cap and its curvature constant.

    ``anchor_min`` is the smallest anchor probability.  Everything is
    evaluated in log space: the dominant exp(H (1 - w log s) / w) factor
    overflows float64 long before the returned pair does.  The returned cap is
    nudged down by at most a few ulps so that cap * curvature <= kl_weight / 2
    holds exactly in floating point whenever the curvature is finite.  The cap
    is a guarantee, not a requirement; practical runs use far larger steps.
    """
    if kl_weight <= 0.0:
        raise ValueError("kl_weight must be positive")
    if not 0.0 < anchor_min <= 1.0:
        raise ValueError("anchor_min must lie in (0, 1]")
    if horizon < 1 or num_actions < 1:
        raise ValueError("horizon and num_actions must be >= 1")
    if reward_lipschitz < 0.0:
        raise ValueError("reward_lipschitz must be nonnegative")

    weight = float(kl_weight)
    floor = float(anchor_min)
    h = float(horizon)
    acts = float(num_actions)
    lip = float(reward_lipschitz)

    # exponent of the dominant factor and log of the anchor-sensitivity constant
    exponent = h * (1.0 - weight * math.log(floor)) / weight
    tail = 2.0 * (1.0 + h) - weight * (1.0 + 2.0 * h) * math.log(floor) + 2.0 * weight * math.log(acts)
    log_gap = float(np.logaddexp(math.log(2.0 * weight * acts) + exponent, math.log(tail)))

    log_squared = 2.0 * log_gap - math.log(acts) - exponent
    log_lip_term = 2.0 * math.log(lip * h) if lip > 0.0 else -np.inf
    log_curvature = math.log(4.0 * h * h) + float(np.logaddexp(log_lip_term, log_squared))

    log_lip = math.log(lip) if lip > 0.0 else -np.inf
    log_cap_smooth = -(math.log(2.0 * h) + float(np.logaddexp(log_lip, log_gap)))
    log_cap_curved = math.log(weight) - math.log(2.0) - log_curvature

    curvature = float(np.exp(log_curvature))
    cap = float(np.exp(min(log_cap_smooth, log_cap_curved)))
    # keep the guarantee exact under the final roundings
    while np.isfinite(curvature) and cap > 0.0 and cap * curvature > weight / 2.0:
        cap = float(np.nextafter(cap, 0.0))
    return cap, curvature


@dataclass(frozen=True)
class MirrorFlowPath:
    """Sampled continuous-time trajectory: ``policies[i]`` at ``times[i]``."""

    times: Array
    policies: Array


def mirror_flow_integrate(
    model: MfgModel,
    init: Array,
    anchor: Array,
    kl_weight: float,
    dt: float,
    t_end: float,
    *,
    sample_every: int = 10,
) -> MirrorFlowPath:
    """Integrate the continuous-time analogue of the inner update with RK4.

    The state moves along the centered replicator field
    pi * (g - <g, pi>) with gain g = q - kl_weight * log(pi / anchor), which
    keeps row sums invariant; rows are renormalized after every step to remove
    integration drift.  ``dt`` may not exceed 1e-2.  The path is sampled every
    ``sample_every`` steps plus the endpoint, starting at time zero.
    """
    if dt <= 0.0 or dt > MAX_FLOW_DT * (1.0 + 1e-12):
        raise ValueError(f"dt must lie in (0, {MAX_FLOW_DT}]")
    if t_end <= 0.0:
        raise ValueError("t_end must be positive")
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    if kl_weight <= 0.0:
        raise ValueError("kl_weight must be positive")
    init = np.asarray(init, dtype=np.float64)
    anchor = np.asarray(anchor, dtype=np.float64)
    _require_full_support(init, "init")
    _require_full_support(anchor, "anchor")

    def drift(pol: Array) -> Array:
        if not np.all(np.isfinite(pol)) or np.any(pol <= 0.0):
            raise FloatingPointError("mirror flow left the simplex interior")
        flow = forward_flow(model, pol)
        tables = backward_values(model, flow, pol, anchor, kl_weight)
        gain = regularized_advantage(tables, pol, anchor, kl_weight)
        centered = gain - (gain * pol).sum(axis=-1, keepdims=True)
        return pol * centered

    steps = max(1, int(round(t_end / dt)))
    policy = np.array(init, dtype=np.float64)
    times = [0.0]
    sampled = [policy.copy()]
    for n in range(1, steps + 1):
        k1 = drift(policy)
        k2 = drift(policy + 0.5 * dt * k1)
        k3 = drift(policy + 0.5 * dt * k2)
        k4 = drift(policy + dt * k3)
        policy = policy + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(policy)):
            raise FloatingPointError("mirror flow produced a non-finite state")
        policy = policy / policy.sum(axis=-1, keepdims=True)
        if n % sample_every == 0 or n == steps:
            times.append(n * dt)
            sampled.append(policy.copy())
    return MirrorFlowPath(times=np.asarray(times), policies=np.stack(sampled))
