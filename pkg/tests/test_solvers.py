"""Inner/outer solver loops, step-size theory, and the continuous-time flow."""
from __future__ import annotations

import math

import numpy as np
import pytest

from mfg_prox import (
    SolverConfig,
    beach_bar_model,
    exploitability,
    forward_flow,
    mirror_flow_integrate,
    mirror_weights_update,
    pp_solve,
    random_policy,
    rmd_first_order_residual,
    rmd_solve,
    rmd_step,
    step_size_bound,
    uniform_policy,
    weighted_kl,
)
from _helpers import random_table_model, zero_reward_model


def test_solver_config_validation():
    good = SolverConfig(kl_weight=0.1, step_size=0.1, inner_iters=5)
    assert good.outer_iters == 1 and good.record_every == 1
    SolverConfig(kl_weight=0.9, step_size=1.1, inner_iters=0, outer_iters=0)  # mix 0.99 ok
    with pytest.raises(ValueError):
        SolverConfig(kl_weight=0.0, step_size=0.1, inner_iters=1)
    with pytest.raises(ValueError):
        SolverConfig(kl_weight=0.1, step_size=0.0, inner_iters=1)
    with pytest.raises(ValueError):
        SolverConfig(kl_weight=2.0, step_size=0.5, inner_iters=1)  # mix = 1
    with pytest.raises(ValueError):
        SolverConfig(kl_weight=0.1, step_size=0.1, inner_iters=-1)
    with pytest.raises(ValueError):
        SolverConfig(kl_weight=0.1, step_size=0.1, inner_iters=1, outer_iters=-1)
    with pytest.raises(ValueError):
        SolverConfig(kl_weight=0.1, step_size=0.1, inner_iters=1, record_every=0)
    with pytest.raises(ValueError):
        SolverConfig(kl_weight=0.1, step_size=0.1, inner_iters=1, mu_floor=0.0)


def test_rmd_step_fixed_point_without_rewards():
    rng = np.random.default_rng(0)
    model = zero_reward_model(rng, 3, 2, 4)
    policy = random_policy(model, rng)
    stepped = rmd_step(model, policy, policy, 0.3, 0.5)
    assert np.abs(stepped - policy).max() < 1e-14


def test_unanchored_update_softmax_hand_value():
    # no anchor pull, unit step: uniform row reweighted by exp(q)
    q = np.array([[[1.0, 0.0]]])
    row = mirror_weights_update(np.full((1, 1, 2), 0.5), np.full((1, 1, 2), 0.5), q, 0.0, 1.0)
    e = math.e
    assert row[0, 0, 0] == pytest.approx(e / (e + 1.0), abs=1e-15)
    assert row[0, 0, 1] == pytest.approx(1.0 / (e + 1.0), abs=1e-15)


def test_update_invariant_to_action_constant_shifts():
    rng = np.random.default_rng(1)
    policy = rng.dirichlet(np.ones(4), size=(3, 5))
    anchor = rng.dirichlet(np.ones(4), size=(3, 5))
    q = rng.normal(size=(3, 5, 4))
    shifted = q + rng.normal(size=(3, 5, 1))
    a = mirror_weights_update(policy, anchor, q, 0.4, 0.6)
    b = mirror_weights_update(policy, anchor, shifted, 0.4, 0.6)
    assert np.abs(a - b).max() < 1e-12


def test_update_survives_extreme_values():
    rng = np.random.default_rng(2)
    policy = rng.dirichlet(np.ones(3), size=(2, 2))
    anchor = rng.dirichlet(np.ones(3), size=(2, 2))
    q = np.array([-500.0, 0.0, 500.0]) * np.ones((2, 2, 1))
    out = mirror_weights_update(policy, anchor, q, 0.2, 0.9)
    assert np.all(np.isfinite(out))
    assert np.abs(out.sum(axis=-1) - 1.0).max() < 1e-12
    assert out.min() >= 0.0


def test_update_near_full_mix_forgets_the_iterate():
    # as kl_weight * step_size approaches one the update tends to the
    # anchor-based softmax, whatever the current policy is
    rng = np.random.default_rng(3)
    anchor = rng.dirichlet(np.ones(3), size=(2, 2)) * 0.9 + 0.1 / 3
    q = rng.normal(size=(2, 2, 3))
    step = 1.0 - 1e-9
    first = rng.dirichlet(np.ones(3), size=(2, 2)) * 0.9 + 0.1 / 3
    second = rng.dirichlet(np.ones(3), size=(2, 2)) * 0.9 + 0.1 / 3
    out_first = mirror_weights_update(first, anchor, q, 1.0, step)
    out_second = mirror_weights_update(second, anchor, q, 1.0, step)
    logits = np.log(anchor) + step * q
    logits -= logits.max(axis=-1, keepdims=True)
    target = np.exp(logits) / np.exp(logits).sum(axis=-1, keepdims=True)
    assert np.abs(out_first - out_second).max() < 1e-6
    assert np.abs(out_first - target).max() < 1e-6


def test_update_rejects_bad_inputs():
    interior = np.full((1, 1, 2), 0.5)
    onehot = np.array([[[1.0, 0.0]]])
    q = np.zeros((1, 1, 2))
    with pytest.raises(ValueError):
        mirror_weights_update(onehot, interior, q, 0.5, 0.5)
    with pytest.raises(ValueError):
        mirror_weights_update(interior, onehot, q, 0.5, 0.5)
    with pytest.raises(ValueError):
        mirror_weights_update(interior, interior, q, 2.0, 0.5)  # mix = 1
    with pytest.raises(ValueError):
        mirror_weights_update(interior, interior, q, 0.5, 0.0)


def test_first_order_residual_flags_stale_pairs():
    model = beach_bar_model(10, 10, 0.1)
    start = uniform_policy(model)
    stepped = rmd_step(model, start, start, 0.1, 0.1)
    assert rmd_first_order_residual(model, start, stepped, start, 0.1, 0.1) <= 1e-8
    # claiming "no movement" leaves the optimality defect of the plain policy
    assert rmd_first_order_residual(model, start, start, start, 0.1, 0.1) > 1e-4


def test_rmd_solve_zero_iterations():
    model = beach_bar_model(6, 5, 0.1)
    init = uniform_policy(model)
    final, trace = rmd_solve(model, init, init, SolverConfig(0.1, 0.1, 0))
    assert np.array_equal(final, init)
    assert len(trace.records) == 1
    only = trace.records[0]
    assert (only.outer_k, only.inner_t) == (0, 0)
    assert not math.isnan(only.exploitability)
    assert math.isnan(only.kl_step)


def test_rmd_solve_is_deterministic():
    model = beach_bar_model(6, 5, 0.1)
    init = uniform_policy(model)
    config = SolverConfig(0.1, 0.1, 30, record_every=10)
    final_a, trace_a = rmd_solve(model, init, init, config)
    final_b, trace_b = rmd_solve(model, init, init, config)
    assert np.array_equal(final_a, final_b)
    keys_a = [(r.outer_k, r.inner_t, r.exploitability, r.kl_step) for r in trace_a.records]
    keys_b = [(r.outer_k, r.inner_t, r.exploitability, r.kl_step) for r in trace_b.records]
    assert keys_a == keys_b


def test_rmd_trace_record_pattern():
    model = beach_bar_model(6, 5, 0.1)
    init = uniform_policy(model)
    final, trace = rmd_solve(model, init, init, SolverConfig(0.1, 0.1, 10, record_every=4))
    assert [(r.outer_k, r.inner_t) for r in trace.records] == [(0, 0), (0, 4), (0, 8), (0, 10)]
    assert all(not math.isnan(r.exploitability) for r in trace.records)
    assert math.isnan(trace.records[0].kl_step)
    assert all(not math.isnan(r.kl_step) for r in trace.records[1:])


def test_rmd_solve_snapshots_align_with_records():
    model = beach_bar_model(6, 5, 0.1)
    init = uniform_policy(model)
    final, trace = rmd_solve(
        model, init, init, SolverConfig(0.1, 0.1, 9, record_every=3), snapshot_policies=True
    )
    assert [(k, t) for k, t, _ in trace.policy_snapshots] == [(0, 0), (0, 3), (0, 6), (0, 9)]
    assert np.array_equal(trace.policy_snapshots[0][2], init)
    assert np.array_equal(trace.policy_snapshots[-1][2], final)


def test_rmd_step_kl_reaches_tolerance_on_benchmark():
    model = beach_bar_model(10, 10, 0.1)
    init = uniform_policy(model)
    final, trace = rmd_solve(model, init, init, SolverConfig(0.1, 0.1, 600, record_every=50))
    steps = [r.kl_step for r in trace.records if not math.isnan(r.kl_step)]
    assert steps[-1] <= 1e-8
    # the recorded step sizes shrink down the whole tail
    assert all(later < earlier for earlier, later in zip(steps, steps[1:]))


def test_rmd_iterates_approach_converged_reference_monotonically():
    model = beach_bar_model(6, 5, 0.1)
    init = uniform_policy(model)
    reference, _ = rmd_solve(model, init, init, SolverConfig(0.2, 0.2, 800, record_every=800))
    ref_flow = forward_flow(model, reference)
    _, trace = rmd_solve(
        model, init, init, SolverConfig(0.2, 0.2, 80), snapshot_policies=True
    )
    gaps = [weighted_kl(ref_flow, reference, pol) for _, _, pol in trace.policy_snapshots]
    assert all(later <= earlier + 1e-12 for earlier, later in zip(gaps, gaps[1:]))
    assert gaps[-1] < gaps[0]


def test_pp_solve_zero_outer_steps():
    model = beach_bar_model(6, 5, 0.1)
    init = uniform_policy(model)
    final, trace = pp_solve(model, init, SolverConfig(0.1, 0.1, 10, outer_iters=0))
    assert np.array_equal(final, init)
    assert trace.records == []


def test_pp_fixed_point_without_rewards():
    rng = np.random.default_rng(4)
    model = zero_reward_model(rng, 3, 2, 4)
    init = random_policy(model, rng)
    final, _ = pp_solve(model, init, SolverConfig(0.3, 0.5, 4, outer_iters=3))
    assert np.abs(final - init).max() < 1e-12
    assert weighted_kl(forward_flow(model, init), final, init) < 1e-9


def test_pp_trace_scores_once_per_outer_step():
    model = beach_bar_model(6, 5, 0.1)
    init = uniform_policy(model)
    final, trace = pp_solve(model, init, SolverConfig(0.1, 0.1, 5, outer_iters=4))
    assert len(trace.records) == 20
    assert all(r.inner_t >= 1 for r in trace.records)
    scored = [r for r in trace.records if not math.isnan(r.exploitability)]
    assert [(r.outer_k, r.inner_t) for r in scored] == [(0, 5), (1, 5), (2, 5), (3, 5)]
    values = [r.exploitability for r in scored]
    assert all(later <= earlier + 1e-9 for earlier, later in zip(values, values[1:]))


def test_pp_beats_plain_inner_loop_at_equal_budget():
    model = beach_bar_model(6, 5, 0.1)
    init = uniform_policy(model)
    pp_final, _ = pp_solve(model, init, SolverConfig(0.1, 0.1, 50, outer_iters=10))
    rmd_final, _ = rmd_solve(model, init, init, SolverConfig(0.1, 0.1, 500, record_every=500))
    assert exploitability(model, pp_final) < exploitability(model, rmd_final)


def test_step_size_bound_domain_errors():
    with pytest.raises(ValueError):
        step_size_bound(0.0, 0.5, 2, 2, 1.0)
    with pytest.raises(ValueError):
        step_size_bound(0.1, 0.0, 2, 2, 1.0)
    with pytest.raises(ValueError):
        step_size_bound(0.1, 1.5, 2, 2, 1.0)
    with pytest.raises(ValueError):
        step_size_bound(0.1, 0.5, 0, 2, 1.0)
    with pytest.raises(ValueError):
        step_size_bound(0.1, 0.5, 2, 0, 1.0)
    with pytest.raises(ValueError):
        step_size_bound(0.1, 0.5, 2, 2, -1.0)


def test_step_size_bound_guarantee_and_shape():
    for weight in (0.05, 0.1, 0.5, 1.0):
        for floor in (0.05, 1.0 / 3.0, 0.5):
            for horizon in (1, 2, 5, 10):
                cap, curvature = step_size_bound(weight, floor, horizon, 3, 1.0)
                assert 0.0 < cap < 1.0
                assert curvature > 0.0
                if np.isfinite(curvature):
                    assert cap * curvature <= weight / 2.0
    # a rougher reward landscape can only shrink the certified step
    mild, _ = step_size_bound(0.1, 0.5, 3, 2, 0.5)
    rough, _ = step_size_bound(0.1, 0.5, 3, 2, 5.0)
    assert rough <= mild


def test_step_size_bound_matches_high_precision_evaluation():
    from mpmath import mp, mpf

    mp.dps = 60

    def oracle(weight, floor, horizon, acts, lip):
        w, s, h, a, lip = (mpf(str(x)) for x in (weight, floor, horizon, acts, lip))
        bulge = mp.e ** (h * (1 - w * mp.log(s)) / w)
        gap = 2 * w * a * bulge + 2 * (1 + h) - w * (1 + 2 * h) * mp.log(s) + 2 * w * mp.log(a)
        curvature = 4 * h**2 * (lip**2 * h**2 + gap**2 / (a * bulge))
        cap = min(1 / (2 * h * (lip + gap)), w / (2 * curvature))
        return cap, curvature

    tuples = [
        (0.1, 1.0 / 3.0, 2, 3, 1.0),
        (0.5, 0.25, 3, 4, 2.0),
        (1.0, 0.5, 1, 2, 0.0),
        (0.05, 0.05, 20, 3, 1.0),  # naive evaluation overflows here
    ]
    for weight, floor, horizon, acts, lip in tuples:
        cap, curvature = step_size_bound(weight, floor, horizon, acts, lip)
        exact_cap, exact_curv = oracle(weight, floor, horizon, acts, lip)
        assert abs(cap / float(exact_cap) - 1.0) < 1e-10
        if np.isfinite(curvature):
            assert abs(curvature / float(exact_curv) - 1.0) < 1e-10


def test_mirror_flow_stationary_without_rewards():
    rng = np.random.default_rng(5)
    model = zero_reward_model(rng, 3, 2, 3)
    init = random_policy(model, rng)
    path = mirror_flow_integrate(model, init, init, 0.5, 1e-2, 0.5)
    assert np.abs(path.policies[-1] - init).max() < 1e-13


def test_mirror_flow_rejects_coarse_steps():
    model = beach_bar_model(5, 3, 0.1)
    init = uniform_policy(model)
    with pytest.raises(ValueError):
        mirror_flow_integrate(model, init, init, 0.5, 2e-2, 1.0)
    with pytest.raises(ValueError):
        mirror_flow_integrate(model, init, init, 0.5, 0.0, 1.0)
    with pytest.raises(ValueError):
        mirror_flow_integrate(model, init, init, 0.5, 1e-2, -1.0)
    with pytest.raises(ValueError):
        mirror_flow_integrate(model, init, init, 0.0, 1e-2, 1.0)


def test_mirror_flow_path_structure_and_simplex():
    model = beach_bar_model(5, 3, 0.1)
    init = uniform_policy(model)
    path = mirror_flow_integrate(model, init, init, 0.5, 1e-2, 0.55, sample_every=10)
    # 55 steps: samples at 0, every tenth step, and the endpoint
    assert np.allclose(path.times, [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.55])
    assert path.policies.shape == (7, 3, 5, 3)
    assert np.abs(path.policies.sum(axis=-1) - 1.0).max() < 1e-12
    assert path.policies.min() > 0.0


def test_mirror_flow_halving_dt_keeps_endpoint():
    model = beach_bar_model(5, 3, 0.1)
    init = uniform_policy(model)
    coarse = mirror_flow_integrate(model, init, init, 0.5, 1e-2, 1.0, sample_every=100)
    fine = mirror_flow_integrate(model, init, init, 0.5, 5e-3, 1.0, sample_every=200)
    assert np.abs(coarse.policies[-1] - fine.policies[-1]).sum() <= 1e-6
