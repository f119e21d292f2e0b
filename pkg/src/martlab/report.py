"""Figure rendering for the report path: exact curves and marginal bars as PNG files.

Figures land next to the delimited output so a report directory is
self-contained; everything is computed from the exact flows, with an optional
empirical overlay from a Monte Carlo run.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .exactprob import Dist, abs_moment, tv_distance, uniform_pm1
from .marginals import MarginalFlow


def fig_limit_convergence(flow: MarginalFlow, out_path: Path) -> Path:
    """Mass on {-1, +1} and total variation distance to the +-1 limit law, per n."""
    ns = list(range(flow.horizon + 1))
    target = uniform_pm1()
    pm1_mass = [float(flow[n].mass(-1) + flow[n].mass(1)) for n in ns]
    tv = [float(tv_distance(flow[n], target)) for n in ns]

    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(ns, pm1_mass, marker="o", ms=3, label="mass on {-1, +1}")
    ax.plot(ns, tv, marker="s", ms=3, label="tv distance to uniform{-1, +1}")
    ax.set_xlabel("n")
    ax.set_ylabel("exact value")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(f"{flow.kernel}: approach to the two-point limit law")
    ax.legend(frameon=False)
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out_path


def fig_abs_moments(flow: MarginalFlow, orders: tuple[int, ...], out_path: Path) -> Path:
    """Exact absolute moments E|M_n|^p over time, one curve per order."""
    ns = list(range(flow.horizon + 1))
    fig, ax = plt.subplots(figsize=(7, 4.2))
    for p in orders:
        ax.plot(ns, [float(abs_moment(flow[n], p)) for n in ns], marker="o", ms=3, label=f"p = {p}")
    ax.set_xlabel("n")
    ax.set_ylabel("E |M_n|^p (exact)")
    ax.set_title(f"{flow.kernel}: absolute moments")
    ax.legend(frameon=False)
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out_path


def fig_marginal_bars(
    exact: Dist, n: int, out_path: Path, empirical: dict[int, float] | None = None, title: str = ""
) -> Path:
    """Exact marginal at one time as bars, optionally overlaid with empirical frequencies."""
    xs = exact.support()
    if empirical:
        xs = sorted(set(xs) | set(empirical))
    heights = [float(exact.mass(x)) for x in xs]

    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.bar([str(x) for x in xs], heights, color="#4878cf", alpha=0.8, label="exact")
    if empirical:
        ax.plot(
            [str(x) for x in xs],
            [empirical.get(x, 0.0) for x in xs],
            "k_",
            markersize=14,
            label="empirical",
        )
        ax.legend(frameon=False)
    ax.set_xlabel("x")
    ax.set_ylabel(f"P(M_{n} = x)")
    ax.set_title(title or f"marginal at n = {n}")
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    if len(xs) > 14:
        ax.tick_params(axis="x", labelrotation=90, labelsize=7)
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out_path
