"""Figure rendering for report outputs.

All figures are written to files (headless Agg backend); the report path
emits one PNG next to each delimited curve file it produces.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return str(path)


def fig_trajectory(stats, path, bound_curve=None, title="trajectory"):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    t = np.asarray(stats.t_grid)
    ax.plot(t, stats.mean_plus, "o-", ms=3, label="mean + count")
    se = stats.stderr_plus()
    ax.fill_between(t, stats.mean_plus - 3 * se, stats.mean_plus + 3 * se, alpha=0.2)
    if np.any(np.asarray(stats.mean_minus) > 0):
        ax.plot(t, stats.mean_minus, "s-", ms=3, label="mean - count")
        sem = stats.stderr_minus()
        ax.fill_between(t, stats.mean_minus - 3 * sem, stats.mean_minus + 3 * sem, alpha=0.2)
    if bound_curve is not None:
        ax.plot(t, bound_curve, "k--", label="bound")
    ax.set_xlabel("t")
    ax.set_ylabel("count")
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _finish(fig, path)


def fig_lyapunov(t, mean_v, bound, path, title="weight functional vs bound"):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(t, mean_v, "o-", ms=3, label="empirical mean V")
    ax.plot(t, bound, "k--", label="drift bound")
    ax.set_xlabel("t")
    ax.set_ylabel("V")
    ax.set_yscale("log")
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _finish(fig, path)


def fig_pair_correlation(est, path, expected=None, title="pair correlations"):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    mid = 0.5 * (est.bin_edges[:-1] + est.bin_edges[1:])
    for vals, ses, label in (
        (est.k20, est.k20_se, "k(2,0)"),
        (est.k11, est.k11_se, "k(1,1)"),
        (est.k02, est.k02_se, "k(0,2)"),
    ):
        if np.any(vals > 0):
            ax.errorbar(mid, vals, yerr=3 * ses, fmt="o-", ms=3, capsize=2, label=label)
    if expected is not None:
        ax.axhline(expected, color="k", ls="--", lw=1, label="expected")
    ax.set_xlabel("r")
    ax.set_ylabel("pair correlation")
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _finish(fig, path)


def fig_averaging(rows, path, title="averaging error vs environment speed"):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    by_obs: dict[str, list] = {}
    for r in rows:
        if not isinstance(r["epsilon"], (int, float)):
            continue
        by_obs.setdefault(r["observable"], []).append((r["epsilon"], r["sup_error"]))
    for obs, pts in by_obs.items():
        pts.sort()
        eps = [p[0] for p in pts]
        err = [max(p[1], 1e-16) for p in pts]
        ax.loglog(eps, err, "o-", label=obs)
    ax.set_xlabel("epsilon")
    ax.set_ylabel("sup error over the grid")
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _finish(fig, path)


def fig_envelope_ratio(report, path, title="entry/envelope ratios"):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    t = [row["t"] for row in report["per_time"]]
    ratio = [row["worst_ratio"] for row in report["per_time"]]
    ax.plot(t, ratio, "o-", ms=3, label="worst ratio")
    ax.axhline(1.0, color="k", ls="--", lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel("max entry / envelope")
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _finish(fig, path)


def fig_c_psi_curve(curve: dict, path, title="environment constant"):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    alphas = sorted(curve)
    ax.plot(alphas, [curve[a] for a in alphas], "o-", ms=3)
    ax.set_xlabel("alpha-")
    ax.set_ylabel("C_psi(alpha-)")
    ax.set_title(title)
    return _finish(fig, path)
