"""Trace serialization and report figures for experiment runs."""
from __future__ import annotations

import math
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .model import Array
from .solvers import TraceRecord

__all__ = [
    "TRACE_HEADER",
    "COMPARISON_HEADER",
    "write_trace_csv",
    "write_comparison_csv",
    "render_report",
]

TRACE_HEADER = "outer_k,inner_t,exploitability,kl_step,wall_clock_ms"
COMPARISON_HEADER = "cumulative_step,exploitability_a,exploitability_b"


def _fmt(value: float) -> str:
    """17 significant digits; NaN marks a column that was not evaluated."""
    if math.isnan(value):
        return ""
    return f"{value:.17g}"


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_trace_csv(records: list[TraceRecord], path: str | Path, *, timing: bool = False) -> None:
    """Write a convergence trace.  Without ``timing`` the wall-clock column is
    zeroed so identical runs produce byte-identical files."""
    lines = [TRACE_HEADER]
    for rec in records:
        wall = rec.wall_clock_ms if timing else 0.0
        lines.append(
            f"{rec.outer_k},{rec.inner_t},{_fmt(rec.exploitability)},"
            f"{_fmt(rec.kl_step)},{_fmt(wall)}"
        )
    _write_atomic(Path(path), "\n".join(lines) + "\n")


def write_comparison_csv(rows: list[tuple[int, float, float]], path: str | Path) -> None:
    lines = [COMPARISON_HEADER]
    for step, left, right in rows:
        lines.append(f"{step},{_fmt(left)},{_fmt(right)}")
    _write_atomic(Path(path), "\n".join(lines) + "\n")


def _simplex_panel(
    ax: plt.Axes,
    snapshots: list[tuple[int, int, Array]],
    steps: list[int],
    plot_step: int,
    plot_state: int,
    num_actions: int,
) -> None:
    rows = np.stack([pol[plot_step, plot_state] for _, _, pol in snapshots])
    if num_actions == 3:
        # barycentric projection of the 2-simplex onto the plane
        xs = rows[:, 1] + 0.5 * rows[:, 2]
        ys = (math.sqrt(3.0) / 2.0) * rows[:, 2]
        corner_x = [0.0, 1.0, 0.5, 0.0]
        corner_y = [0.0, 0.0, math.sqrt(3.0) / 2.0, 0.0]
        ax.plot(corner_x, corner_y, color="0.6", lw=1.0)
        ax.plot(xs, ys, "-o", ms=2.5, lw=1.0, color="tab:blue")
        ax.plot(xs[:1], ys[:1], "s", color="tab:green", label="start")
        ax.plot(xs[-1:], ys[-1:], "D", color="tab:red", label="end")
        ax.legend(loc="upper right", fontsize=8)
        ax.set_aspect("equal")
        ax.set_axis_off()
    elif num_actions == 2:
        ax.plot(steps, rows[:, 1], "-o", ms=2.5, lw=1.0)
        ax.set_xlabel("total inner step")
        ax.set_ylabel("probability of action 1")
        ax.set_ylim(-0.02, 1.02)
    else:
        for a in range(num_actions):
            ax.plot(steps, rows[:, a], lw=1.0, label=f"action {a}")
        ax.set_xlabel("total inner step")
        ax.set_ylabel("action probability")
        ax.legend(fontsize=8)
    ax.set_title(f"policy trajectory at step {plot_step}, state {plot_state}")


def render_report(
    records: list[TraceRecord],
    snapshots: list[tuple[int, int, Array]],
    path: str | Path,
    *,
    inner_iters: int,
    plot_step: int,
    plot_state: int,
    num_actions: int,
) -> None:
    """Two-panel SVG: exploitability against cumulative inner step (log scale
    where possible) and the policy-simplex trajectory of one (h, s) pair."""

    def cumulative(outer_k: int, inner_t: int) -> int:
        return outer_k * inner_iters + inner_t

    fig, (ax_left, ax_right) = plt.subplots(1, 2, figsize=(11.0, 4.4))

    scored = [r for r in records if not math.isnan(r.exploitability)]
    steps = [cumulative(r.outer_k, r.inner_t) for r in scored]
    values = [r.exploitability for r in scored]
    ax_left.plot(steps, values, "-o", ms=3.0, lw=1.2)
    if any(v > 0.0 for v in values):
        ax_left.set_yscale("log")
    ax_left.set_xlabel("total inner step")
    ax_left.set_ylabel("exploitability")
    ax_left.set_title("convergence")
    ax_left.grid(True, which="both", alpha=0.3)

    if snapshots:
        snap_steps = [cumulative(k, t) for k, t, _ in snapshots]
        _simplex_panel(ax_right, snapshots, snap_steps, plot_step, plot_state, num_actions)
    else:
        ax_right.text(0.5, 0.5, "no policy snapshots", ha="center", va="center")
        ax_right.set_axis_off()

    fig.tight_layout()
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    fig.savefig(tmp, format="svg")
    plt.close(fig)
    os.replace(tmp, target)
