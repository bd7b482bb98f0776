"""PNG figures next to the CSV outputs (matplotlib, non-interactive backend)."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

BOUND_STYLE = {"thm1": "--", "thm2a": "-.", "thm2b": ":", "central": (0, (1, 3))}


def _save(fig, path):
    tmp = path + ".tmp.png"
    fig.savefig(tmp, dpi=120, metadata={"Software": None})
    plt.close(fig)
    os.replace(tmp, path)
    return path


def plot_curves(points, title, path):
    """Mean excess risk per sweep point (solid) and its bounds (broken lines)."""
    from .report import bound_columns

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for i, p in enumerate(points):
        color = f"C{i % 10}"
        k, y = p.stats.k, p.stats.excess_mean
        pos = y > 0
        ax.semilogy(k[pos], y[pos], color=color, lw=1.6, label=p.label or "empirical")
        for name, col in bound_columns(p.resolved, k).items():
            if col is None:
                continue
            ok = np.isfinite(col) & (col > 0)
            ax.semilogy(k[ok], col[ok], color=color, lw=1.0, ls=BOUND_STYLE[name], alpha=0.8)
    ax.set_xlabel("iteration k")
    ax.set_ylabel("excess risk")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_energy(rows, title, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    Ns = [r.N for r in rows]
    E = [r.total_energy if r.reached else np.nan for r in rows]
    ax.plot(Ns, E, "o-")
    ax.set_xscale("log")
    ax.set_xlabel("number of nodes N")
    ax.set_ylabel("total energy to target")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


def plot_summary(cfg, summary, out_dir):
    """Write the figures for one RunSummary; returns the file paths."""
    title = cfg["figure"] or cfg["name"]
    files = [plot_curves(summary.points, title, os.path.join(out_dir, f"{cfg['name']}.png"))]
    if summary.energy_rows is not None:
        files.append(plot_energy(summary.energy_rows, title,
                                 os.path.join(out_dir, f"{cfg['name']}__energy.png")))
    return files
