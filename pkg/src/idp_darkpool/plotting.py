"""Figures for sweep and calibration reports, written next to the CSV."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (7.0, 3.2),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}
MODE_STYLE = {"idp": dict(color="tab:red", marker="o"), "nonprivate": dict(color="tab:blue", marker="s")}


def figure_path(csv_path: str | Path) -> Path:
    return Path(csv_path).with_suffix(".png")


def plot_sweep(rows: Sequence[dict], path: str | Path, title: str = "") -> Path:
    """Wall-clock and simulated completion time against total orders, one
    line per mode."""
    series = defaultdict(list)
    for r in rows:
        series[r["mode"]].append((int(r["total_orders"]), float(r["wall_seconds"]), float(r["sim_seconds"])))
    with plt.rc_context(STYLE):
        fig, (ax_wall, ax_sim) = plt.subplots(1, 2)
        for mode, pts in sorted(series.items()):
            pts.sort()
            xs = [p[0] for p in pts]
            ax_wall.plot(xs, [p[1] for p in pts], label=mode, **MODE_STYLE.get(mode, {}))
            ax_sim.plot(xs, [p[2] for p in pts], label=mode, **MODE_STYLE.get(mode, {}))
        for ax, label in ((ax_wall, "wall-clock (s)"), (ax_sim, "simulated time (s)")):
            ax.set_xscale("log", base=2)
            ax.set_xlabel("total orders")
            ax.set_ylabel(label)
        ax_wall.legend()
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
    return Path(path)


def plot_calibration(checks: Iterable, path: str | Path) -> Path:
    """Shifted-geometric divergence against its delta budget, per epsilon."""
    by_eps = defaultdict(list)
    for c in checks:
        by_eps[c.epsilon].append((c.delta, c.divergence))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        lo, hi = 1.0, 0.0
        for eps, pts in sorted(by_eps.items()):
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"eps={eps:.3g}")
            lo, hi = min(lo, pts[0][0]), max(hi, pts[-1][0])
        ax.plot([lo, hi], [lo, hi], color="k", linestyle="--", linewidth=0.8, label="delta")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("delta")
        ax.set_ylabel("hockey-stick divergence")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
    return Path(path)
