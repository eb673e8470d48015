"""Standalone SVG figures (no display needed)."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_write_text  # noqa: E402

# fixed ids and no timestamp, so identical inputs give identical files
plt.rcParams["svg.hashsalt"] = "scalenas"
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path):
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return atomic_write_text(path, buf.getvalue())


def flops_histograms(path, samples: dict, budgets=(), bins: int = 200):
    """Overlaid FLOPs histograms on a log axis, one per sampler."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    allv = np.concatenate([np.asarray(v, float) for v in samples.values()])
    edges = np.geomspace(allv.min(), allv.max(), bins + 1)
    for (name, values), color in zip(samples.items(), ("tab:blue", "tab:red", "tab:green")):
        ax.hist(np.asarray(values) / 1e6, bins=edges / 1e6, alpha=0.5, label=name, color=color)
    for b in budgets:
        ax.axvline(b / 1e6, color="k", lw=0.8, ls="--")
    ax.set_xscale("log")
    ax.set_xlabel("MFLOPs")
    ax.set_ylabel("paths")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def convergence(path, stds):
    """Per-stage accuracy std of evaluated candidates per iteration."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    stages = sorted({j for row in stds for j in row})
    t = np.arange(1, len(stds) + 1)
    for j in stages:
        ax.plot(t, [row.get(j, np.nan) for row in stds], marker="o", label=f"stage {j}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("accuracy std")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def scaling_fits(path, observed: dict, reports, stages):
    """Observed multipliers and fitted curves, one panel per dimension."""
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.2))
    jmax = max(list(stages) + [max(j for pts in observed.values() for j, _ in pts)])
    grid = np.linspace(0, jmax, 100)
    for ax, dim in zip(axes, ("d", "w", "r")):
        pts = sorted(observed[dim])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "ko", label="searched")
        for rep in reports:
            ax.plot(grid, rep.params(grid)[dim], label=rep.family)
        ax.set_title(dim)
        ax.set_xlabel("stage")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)
