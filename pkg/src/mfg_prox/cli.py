"""Experiment runner: build instances, run solvers, write traces and figures.

Exposes two subcommands.  ``run`` solves one experiment and writes the trace
CSV plus an optional SVG report; ``compare`` runs two solver configurations on
the same model and writes exploitability columns aligned by cumulative inner
step.  A flat ``key=value`` config file can seed any ``run`` flag; explicit
flags win.  The ``MFG_PROX_THREADS`` environment variable caps how many
experiment specs may run in parallel worker slots.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .model import (
    MfgModel,
    beach_bar_model,
    check_weak_monotonicity,
    load_model,
    uniform_policy,
    validate_model,
)
from .reporting import render_report, write_comparison_csv, write_trace_csv
from .solvers import ConvergenceTrace, SolverConfig, pp_solve, rmd_solve

__all__ = ["ExperimentSpec", "ExperimentError", "run_experiment", "compare_solvers", "main"]

WORKERS_ENV = "MFG_PROX_THREADS"


class ExperimentError(RuntimeError):
    """Validation or execution failure that should abort with a diagnostic."""


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce one solver run.

    The model comes either from the named builtin benchmark or from a JSON
    model document at ``model_path`` (the latter wins when both are set).
    """

    benchmark: str = "beach-bar"
    model_path: str | None = None
    states: int = 10
    horizon: int = 10
    epsilon: float = 0.1
    mu_floor: float = 1e-9
    solver: str = "pp"
    kl_weight: float = 0.1
    step_size: float = 0.1
    inner: int = 100
    outer: int = 20
    record_every: int = 0  # 0 means one record per inner loop
    out: str | None = None
    plot: str | None = None
    plot_step: int = 0
    plot_state: int = 0
    seed: int = 0
    monotonicity_samples: int = 0
    timing: bool = False


def worker_cap(default: int = 2) -> int:
    """Parallel worker slots allowed by the environment (at least one)."""
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return default
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ExperimentError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc


def build_model(spec: ExperimentSpec) -> MfgModel:
    """Instantiate and validate the model an experiment spec points at."""
    if spec.model_path is not None:
        try:
            model = load_model(spec.model_path)
        except (OSError, ValueError) as exc:
            raise ExperimentError(f"cannot load model {spec.model_path}: {exc}") from exc
    elif spec.benchmark == "beach-bar":
        try:
            model = beach_bar_model(spec.states, spec.horizon, spec.epsilon, spec.mu_floor)
        except ValueError as exc:
            raise ExperimentError(str(exc)) from exc
    else:
        raise ExperimentError(f"unknown benchmark {spec.benchmark!r}")
    violations = validate_model(model)
    if violations:
        summary = "; ".join(str(v) for v in violations[:5])
        raise ExperimentError(f"model failed validation: {summary}")
    return model


def _solver_config(spec: ExperimentSpec) -> SolverConfig:
    record_every = spec.record_every if spec.record_every > 0 else max(spec.inner, 1)
    try:
        return SolverConfig(
            kl_weight=spec.kl_weight,
            step_size=spec.step_size,
            inner_iters=spec.inner,
            outer_iters=spec.outer,
            mu_floor=spec.mu_floor,
            record_every=record_every,
        )
    except ValueError as exc:
        raise ExperimentError(str(exc)) from exc


def _solve(
    spec: ExperimentSpec, model: MfgModel, *, snapshot_policies: bool = False
) -> tuple[np.ndarray, ConvergenceTrace]:
    config = _solver_config(spec)
    init = uniform_policy(model)
    if spec.solver == "pp":
        return pp_solve(model, init, config, snapshot_policies=snapshot_policies)
    if spec.solver == "rmd":
        return rmd_solve(model, init, init, config, snapshot_policies=snapshot_policies)
    raise ExperimentError(f"unknown solver {spec.solver!r}")


def run_experiment(spec: ExperimentSpec) -> int:
    """Run one spec; returns 0 iff every requested file was fully written.

    On failure a diagnostic goes to stderr, any partially written outputs are
    removed, and the status is nonzero.
    """
    if spec.out is None:
        print("error: no trace output path given (--out)", file=sys.stderr)
        return 1
    outputs = [Path(spec.out)] + ([Path(spec.plot)] if spec.plot else [])
    try:
        model = build_model(spec)
        if spec.monotonicity_samples > 0:
            worst = check_weak_monotonicity(model, spec.monotonicity_samples, spec.seed)
            print(
                f"weak monotonicity worst case over {spec.monotonicity_samples} "
                f"samples: {worst:.6g}"
            )
        policy, trace = _solve(spec, model, snapshot_policies=spec.plot is not None)
        write_trace_csv(trace.records, outputs[0], timing=spec.timing)
        if spec.plot:
            render_report(
                trace.records,
                trace.policy_snapshots,
                Path(spec.plot),
                inner_iters=max(spec.inner, 1),
                plot_step=spec.plot_step,
                plot_state=spec.plot_state,
                num_actions=model.num_actions,
            )
    except (ExperimentError, ValueError, IndexError, OSError, FloatingPointError) as exc:
        for path in outputs:
            path.unlink(missing_ok=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {', '.join(str(p) for p in outputs)}")
    return 0


def _same_model(left: MfgModel, right: MfgModel) -> bool:
    return (
        left.num_states == right.num_states
        and left.num_actions == right.num_actions
        and left.horizon == right.horizon
        and np.array_equal(left.transitions, right.transitions)
        and np.array_equal(left.initial_distribution, right.initial_distribution)
        and left.reward.kind == right.reward.kind
        and left.reward.mu_floor == right.reward.mu_floor
    )


def _spec_dict(spec: ExperimentSpec) -> dict:
    return {f.name: getattr(spec, f.name) for f in fields(ExperimentSpec)}


def _scored_checkpoints(spec: ExperimentSpec, trace: ConvergenceTrace) -> dict[int, float]:
    stride = max(spec.inner, 1)
    out: dict[int, float] = {}
    for rec in trace.records:
        if not math.isnan(rec.exploitability):
            out[rec.outer_k * stride + rec.inner_t] = rec.exploitability
    return out


def compare_solvers(
    spec_a: ExperimentSpec, spec_b: ExperimentSpec, out_path: str | Path
) -> list[tuple[int, float, float]]:
    """Run both specs on their (identical) model and align exploitability
    records by cumulative inner-step count.

    Mirror-descent sides are re-recorded at the coarsest stride that still
    meets the other side's checkpoints.  Raises when the specs target
    different models or share no aligned checkpoint.
    """
    model_a = build_model(spec_a)
    model_b = build_model(spec_b)
    if not _same_model(model_a, model_b):
        raise ExperimentError("compare_solvers requires both specs to target the same model")

    pair = [spec_a, spec_b]
    for mine, other in ((0, 1), (1, 0)):
        spec, peer = pair[mine], pair[other]
        if spec.solver == "rmd" and spec.record_every == 0 and spec.inner > 0:
            stride = math.gcd(spec.inner, max(peer.inner, 1))
            pair[mine] = ExperimentSpec(**{**_spec_dict(spec), "record_every": stride})
    spec_a, spec_b = pair

    with ThreadPoolExecutor(max_workers=min(2, worker_cap())) as pool:
        future_a = pool.submit(_solve, spec_a, model_a)
        future_b = pool.submit(_solve, spec_b, model_b)
        _, trace_a = future_a.result()
        _, trace_b = future_b.result()

    scored_a = _scored_checkpoints(spec_a, trace_a)
    scored_b = _scored_checkpoints(spec_b, trace_b)
    common = sorted(set(scored_a) & set(scored_b))
    if not common:
        raise ExperimentError("solver traces share no aligned checkpoint")
    rows = [(step, scored_a[step], scored_b[step]) for step in common]
    write_comparison_csv(rows, out_path)
    return rows


# run-flag config keys (underscore spelling) -> value type
_RUN_FLAGS: dict[str, type] = {
    "benchmark": str,
    "model": str,
    "states": int,
    "horizon": int,
    "epsilon": float,
    "mu_floor": float,
    "solver": str,
    "lambda": float,
    "eta": float,
    "inner": int,
    "outer": int,
    "record_every": int,
    "out": str,
    "plot": str,
    "plot_step": int,
    "plot_state": int,
    "seed": int,
    "monotonicity_samples": int,
    "timing": bool,
}

# config-file key -> ExperimentSpec field, where the two differ
_KEY_TO_FIELD = {
    "model": "model_path",
    "lambda": "kl_weight",
    "eta": "step_size",
}


def _read_config_file(path: str) -> dict[str, str]:
    """Flat key=value file; keys mirror the run flags with '-' or '_' spelling."""
    entries: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ExperimentError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ExperimentError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        entries[key.strip().replace("-", "_")] = value.strip()
    return entries


def _parse_config_value(key: str, raw: str) -> object:
    kind = _RUN_FLAGS[key]
    if kind is bool:
        return raw.lower() in ("1", "true", "yes", "on")
    try:
        return kind(raw)
    except ValueError as exc:
        raise ExperimentError(f"config key {key!r}: {exc}") from exc


def _assemble_run_spec(args: argparse.Namespace, entries: dict[str, str]) -> ExperimentSpec:
    """Merge command line over config file over built-in defaults."""
    base = ExperimentSpec()
    values: dict[str, object] = {}
    for key in _RUN_FLAGS:
        name = _KEY_TO_FIELD.get(key, key)
        from_cli = getattr(args, name)
        if from_cli is not None:
            values[name] = from_cli
        elif key in entries:
            values[name] = _parse_config_value(key, entries[key])
        else:
            values[name] = getattr(base, name)
    for key in entries:
        if key not in _RUN_FLAGS:
            raise ExperimentError(f"unknown config key {key!r}")
    return ExperimentSpec(**values)


def _add_model_flags(parser: argparse.ArgumentParser, *, sentinel: bool) -> None:
    default = (lambda value: None) if sentinel else (lambda value: value)
    parser.add_argument("--benchmark", default=default("beach-bar"), help="builtin model family")
    parser.add_argument("--model", dest="model_path", default=None, metavar="PATH",
                        help="JSON model document (overrides --benchmark)")
    parser.add_argument("--states", type=int, default=default(10))
    parser.add_argument("--horizon", type=int, default=default(10))
    parser.add_argument("--epsilon", type=float, default=default(0.1),
                        help="transition noise level")
    parser.add_argument("--mu-floor", dest="mu_floor", type=float, default=default(1e-9))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfg-prox",
        description="Mean-field game equilibrium solver with exploitability traces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve one experiment and write its trace")
    run.add_argument("--config", default=None, metavar="PATH",
                     help="key=value file seeding any run flag; explicit flags win")
    _add_model_flags(run, sentinel=True)
    run.add_argument("--solver", choices=("rmd", "pp"), default=None)
    run.add_argument("--lambda", dest="kl_weight", type=float, default=None,
                     help="proximal KL strength")
    run.add_argument("--eta", dest="step_size", type=float, default=None,
                     help="mirror-descent step size")
    run.add_argument("--inner", type=int, default=None,
                     help="inner mirror-descent iterations per outer step")
    run.add_argument("--outer", type=int, default=None,
                     help="outer re-anchoring steps (ignored by rmd)")
    run.add_argument("--record-every", dest="record_every", type=int, default=None,
                     help="trace stride in inner steps; 0 records once per inner loop")
    run.add_argument("--out", default=None, help="trace CSV destination")
    run.add_argument("--plot", default=None, metavar="PATH", help="SVG report destination")
    run.add_argument("--plot-step", dest="plot_step", type=int, default=None)
    run.add_argument("--plot-state", dest="plot_state", type=int, default=None)
    run.add_argument("--seed", type=int, default=None, help="seed for sampled diagnostics")
    run.add_argument("--monotonicity-samples", dest="monotonicity_samples", type=int,
                     default=None, help="sample count for the weak-monotonicity diagnostic")
    run.add_argument("--timing", action="store_true", default=None,
                     help="write measured wall-clock times instead of zeros")

    cmp_cmd = sub.add_parser("compare", help="run two solver setups on one model")
    _add_model_flags(cmp_cmd, sentinel=False)
    cmp_cmd.add_argument("--lambda", dest="kl_weight", type=float, default=0.1)
    cmp_cmd.add_argument("--eta", dest="step_size", type=float, default=0.1)
    for tag in ("a", "b"):
        cmp_cmd.add_argument(f"--solver-{tag}", dest=f"solver_{tag}",
                             choices=("rmd", "pp"), default="pp")
        cmp_cmd.add_argument(f"--inner-{tag}", dest=f"inner_{tag}", type=int, default=100)
        cmp_cmd.add_argument(f"--outer-{tag}", dest=f"outer_{tag}", type=int, default=20)
    cmp_cmd.add_argument("--out", required=True, help="comparison CSV destination")
    return parser


def _compare_spec(args: argparse.Namespace, tag: str) -> ExperimentSpec:
    return ExperimentSpec(
        benchmark=args.benchmark,
        model_path=args.model_path,
        states=args.states,
        horizon=args.horizon,
        epsilon=args.epsilon,
        mu_floor=args.mu_floor,
        solver=getattr(args, f"solver_{tag}"),
        kl_weight=args.kl_weight,
        step_size=args.step_size,
        inner=getattr(args, f"inner_{tag}"),
        outer=getattr(args, f"outer_{tag}"),
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "run":
        try:
            entries = _read_config_file(args.config) if args.config else {}
            spec = _assemble_run_spec(args, entries)
        except ExperimentError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        return run_experiment(spec)

    out_path = Path(args.out)
    try:
        rows = compare_solvers(_compare_spec(args, "a"), _compare_spec(args, "b"), out_path)
    except (ExperimentError, ValueError, OSError) as exc:
        out_path.unlink(missing_ok=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out_path} ({len(rows)} aligned checkpoints)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
