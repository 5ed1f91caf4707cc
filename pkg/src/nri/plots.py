"""Figure rendering for the report-producing CLI paths.

Every CLI command that emits a results table can also render the matching
figure to a file; the delimited output stays the primary machine-readable
artifact.  Matplotlib is imported lazily with the Agg backend so headless
runs and figure-free runs never touch a display.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def plot_dot_distribution(records: Sequence[dict], path: str) -> str:
    """Dot-product probability vs d, analytic curve plus simulation points.

    `records` are the rows emitted by the prob/mc/table1 commands: dicts with
    d, P_analytic and optionally P_mc / stderr.
    """
    plt = _pyplot()
    d = np.array([r["d"] for r in records], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    analytic = np.array([r.get("P_analytic", np.nan) for r in records], dtype=float)
    if np.isfinite(analytic).any():
        ax.semilogy(d, analytic, "o-", label="analytic", color="tab:blue")
    mc = np.array([r.get("P_mc", np.nan) for r in records], dtype=float)
    if np.isfinite(mc).any():
        err = np.array([r.get("stderr", np.nan) for r in records], dtype=float)
        ax.errorbar(d, mc, yerr=3 * err, fmt="s", label="simulation (3 s.e.)",
                    color="tab:red", capsize=3)
    ax.set_xlabel("dot product magnitude d")
    ax.set_ylabel("probability")
    ax.set_xticks(d)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_recovery_profile(report, path: str) -> str:
    """Mean decoded value by descending rank with its spread band."""
    plt = _pyplot()
    w = report.config.feature_weight
    mean = report.profile_rank_mean / w
    std = report.profile_rank_std / w
    ranks = np.arange(1, len(mean) + 1)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.fill_between(ranks, mean - std, mean + std, alpha=0.3, color="tab:blue",
                    label="class-to-class spread")
    ax.plot(ranks, mean, color="tab:blue", label="mean decoded weight")
    ax.axvline(report.features_per_class, color="tab:red", linestyle="--",
               label=f"{report.features_per_class} planted features")
    ax.axhline(1.0, color="gray", linewidth=0.8, alpha=0.6)
    ax.set_xlabel("rank in descending top-list")
    ax.set_ylabel("decoded value / feature weight")
    ax.set_title(
        f"{report.config.mode}, N={report.config.matrix_size}, "
        f"n={report.config.state_size}, recovered "
        f"{report.mean_correct:.1f} ± {report.std_correct:.1f} "
        f"of {report.features_per_class}"
    )
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_sweep(records: Sequence[dict], axis: str, path: str) -> str:
    """Mean recovered fraction vs the swept parameter, one line per mode."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    modes = sorted({r["mode"] for r in records})
    for mode in modes:
        rows = [r for r in records if r["mode"] == mode and r["error"] == ""]
        x = np.array([r[axis] for r in rows], dtype=float)
        y = np.array([r["mean"] for r in rows], dtype=float)
        s = np.array([r["std"] for r in rows], dtype=float)
        order = np.argsort(x)
        ax.errorbar(x[order], y[order], yerr=s[order], marker="o", capsize=3, label=mode)
    if axis == "rho":
        ax.set_xscale("log")
    ax.set_xlabel(axis)
    ax.set_ylabel("fraction of features recovered")
    ax.set_ylim(0, 1.05)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
