# edge_core/charts.py

"""SVG figures for solve/compare/sweep outputs. The CSVs hold the numbers."""

import io
import logging
import math
from typing import Dict, List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from constants import Algorithm  # noqa: E402
from edge_core.run_store import atomic_write_text  # noqa: E402

logger = logging.getLogger(__name__)

# Stable hash salt so the SVG element ids do not change between runs
plt.rcParams["svg.hashsalt"] = "scr-charts"


def _label(algorithm: str) -> str:
    try:
        return Algorithm(algorithm).name
    except ValueError:
        return algorithm


def _save(fig, path: str) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    atomic_write_text(path, buf.getvalue())
    logger.info(f"💾 Wrote chart {path}")
    return path


def convergence_chart(trace, path: str) -> str:
    """Three panels: Part-1 objective, Part-2 inner objective per FP round, SCR."""
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    rows = trace.rows[1:]
    its = [r.iter for r in rows]

    ax = axes[0]
    ax.plot(its, [r.obj_part1 for r in rows], marker="o")
    ax.set_title("Association step objective")
    ax.set_xlabel("Outer iteration")

    ax = axes[1]
    for r in rows:
        if r.part2_trace:
            ax.plot(range(1, len(r.part2_trace) + 1), r.part2_trace, marker=".", label=f"outer {r.iter}")
    ax.set_title("Resource step objective")
    ax.set_xlabel("FP iteration")
    if 0 < len(rows) <= 8:
        ax.legend(fontsize="small")

    ax = axes[2]
    ax.plot([r.iter for r in trace.rows], trace.scrs(), marker="o", color="tab:green")
    ax.set_title("SCR")
    ax.set_xlabel("Outer iteration")

    for ax in axes:
        ax.grid(True, alpha=0.3)
    fig.suptitle(_label(trace.algorithm))
    fig.tight_layout()
    return _save(fig, path)


def comparison_chart(rows: Sequence[Dict], path: str) -> str:
    """Bars of SCR per algorithm, annotated with T_total and E_total."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    names = [_label(r["algorithm"]) for r in rows]
    values = [r["scr"] for r in rows]
    bars = ax.bar(names, values, color="tab:blue", alpha=0.8)
    for bar, r in zip(bars, rows):
        ax.annotate(f"T={r['T_total']:.3g}s\nE={r['E_total']:.3g}J",
                    (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                    ha="center", va="bottom", fontsize="x-small")
    ax.set_ylabel("SCR")
    ax.set_title("Service-cost ratio by algorithm")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def _numeric(value) -> Tuple[bool, float]:
    try:
        v = float(value)
    except (TypeError, ValueError):
        return False, math.nan
    return True, v


def sweep_chart(rows: Sequence[Dict], axis: str, path: str) -> str:
    """Mean SCR per algorithm against the swept value (weights: point index)."""
    points: List[str] = []
    for r in rows:
        key = str(r["value"])
        if key not in points:
            points.append(key)
    numeric = all(_numeric(p)[0] for p in points)

    series: Dict[str, Dict[str, float]] = {}
    for r in rows:
        if r.get("scr_mean") is None:
            continue
        series.setdefault(r["algorithm"], {})[str(r["value"])] = float(r["scr_mean"])

    fig, ax = plt.subplots(figsize=(8, 4.5))
    for algorithm, by_point in series.items():
        keys = [p for p in points if p in by_point]
        if numeric:
            xs = [float(p) for p in keys]
            if axis == "b_max":
                xs = [v / 1e6 for v in xs]
        else:
            xs = [points.index(p) for p in keys]
        ax.plot(xs, [by_point[p] for p in keys], marker="o", label=_label(algorithm))

    if numeric:
        ax.set_xlabel("Total bandwidth (MHz)" if axis == "b_max" else axis)
    else:
        ax.set_xticks(range(len(points)))
        ax.set_xticklabels([f"({p.replace('/', ', ')})" for p in points], rotation=30, fontsize="small")
        ax.set_xlabel("(omega_t, omega_e)")
    ax.set_ylabel("Mean SCR")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)
