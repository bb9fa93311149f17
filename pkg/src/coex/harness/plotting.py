"""Figures for learning curves and bandit traces.

Rendering goes through the non-interactive Agg backend so reports work on
headless machines; every figure is written next to its data files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.8),
    "figure.dpi": 110,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
    "legend.fontsize": 8,
    "savefig.bbox": "tight",
}


def _finish(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_curves(summaries, path, title=None):
    """Mean evaluation return with its 95% band, one line per run."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for s in summaries:
            line, = ax.plot(s.steps, s.mean, label=f"{s.name} (n={len(s.seeds)})")
            ax.fill_between(s.steps, s.lo, s.hi, color=line.get_color(), alpha=0.2, linewidth=0)
        ax.set_xlabel("environment steps")
        ax.set_ylabel("evaluation return")
        if title:
            ax.set_title(title)
        ax.legend(loc="best")
        return _finish(fig, path)


def plot_bandit(results, path, title=None):
    """Cumulative regret and windowed optimal rate, mean +- one standard error.

    ``results`` maps a label to a column dict as read from a bandit CSV.
    """
    with plt.rc_context({**STYLE, "figure.figsize": (9.0, 3.6)}):
        fig, (left, right) = plt.subplots(1, 2)
        for label, cols in results.items():
            step = cols["step"]
            line, = left.plot(step, cols["mean_cum_regret"], label=label)
            left.fill_between(step, cols["mean_cum_regret"] - cols["se_cum_regret"],
                              cols["mean_cum_regret"] + cols["se_cum_regret"], color=line.get_color(), alpha=0.2,
                              linewidth=0)
            right.plot(step, cols["mean_opt_rate"], color=line.get_color(), label=label)
            right.fill_between(step, cols["mean_opt_rate"] - cols["se_opt_rate"],
                               cols["mean_opt_rate"] + cols["se_opt_rate"], color=line.get_color(), alpha=0.2,
                               linewidth=0)
        left.set_xlabel("round")
        left.set_ylabel("cumulative expected regret")
        right.set_xlabel("round")
        right.set_ylabel("optimal joint action rate")
        right.set_ylim(-0.02, 1.02)
        right.legend(loc="best")
        if title:
            fig.suptitle(title)
        return _finish(fig, path)
