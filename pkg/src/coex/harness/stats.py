"""Cross-seed statistics: Welch's t-test and t-based confidence bands."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from coex.errors import ConfigError
from coex.marlcore.training import read_metrics

ALPHA = 0.05
VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class WelchResult:
    t: float
    p: float
    df: float
    significant: bool

    def __iter__(self):
        return iter((self.t, self.p, self.significant))


def welch_t_test(a, b, alpha=ALPHA):
    """Two-sided Welch test of equal means, Welch-Satterthwaite degrees of freedom.

    Sample variances are floored at a tiny constant so two constant but
    different samples still separate; equal constant samples give p = 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ConfigError("welch_t_test needs at least two values per sample")
    va = max(a.var(ddof=1), VAR_FLOOR) / a.size
    vb = max(b.var(ddof=1), VAR_FLOOR) / b.size
    diff = a.mean() - b.mean()
    df = (va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    if diff == 0.0:
        return WelchResult(0.0, 1.0, float(df), False)
    t = diff / math.sqrt(va + vb)
    p = float(2.0 * stats.t.sf(abs(t), df))
    return WelchResult(float(t), p, float(df), p < alpha)


def t_half_width(values, level=0.95):
    """Half-width of the two-sided t interval for the mean; 0 for one value."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if n < 2:
        return 0.0
    se = values.std(ddof=1) / math.sqrt(n)
    return float(stats.t.ppf(0.5 + level / 2.0, n - 1) * se)


@dataclass
class RunSummary:
    name: str
    steps: list
    mean: list
    half_width: list
    seed_averages: list
    seeds: list
    average_return: float
    max_return: float
    single_seed: bool

    @property
    def lo(self):
        return [m - h for m, h in zip(self.mean, self.half_width)]

    @property
    def hi(self):
        return [m + h for m, h in zip(self.mean, self.half_width)]

    def to_dict(self):
        out = asdict(self)
        out["lo"], out["hi"] = self.lo, self.hi
        if self.single_seed:
            out["note"] = "single seed: confidence half-width set to 0"
        return out


def summarize(name, curves, seeds=None):
    """Summary from a (seeds, points) array of evaluation returns and its steps.

    ``curves`` is ``(steps, returns)`` with ``returns`` shaped (seeds, points).
    """
    steps, returns = curves
    returns = np.asarray(returns, dtype=np.float64)
    mean = returns.mean(axis=0)
    half = np.array([t_half_width(returns[:, j]) for j in range(returns.shape[1])])
    return RunSummary(
        name=name,
        steps=[int(s) for s in steps],
        mean=mean.tolist(),
        half_width=half.tolist(),
        seed_averages=returns.mean(axis=1).tolist(),
        seeds=list(seeds) if seeds is not None else list(range(returns.shape[0])),
        average_return=float(mean.mean()),
        max_return=float(mean.max()),
        single_seed=returns.shape[0] == 1,
    )


def seed_dirs(run_dir):
    run_dir = Path(run_dir)
    found = [d for d in run_dir.glob("seed_*") if (d / "metrics.csv").is_file()]
    return sorted(found, key=lambda d: int(d.name.split("_", 1)[1]))


def load_curves(run_dir):
    """(steps, returns[seed, point], seeds) from every seed's metrics file."""
    dirs = seed_dirs(run_dir)
    if not dirs:
        raise ConfigError(f"no seed_*/metrics.csv under {run_dir}")
    grids, rows = [], []
    for d in dirs:
        metrics = read_metrics(d / "metrics.csv")
        grids.append([m.step for m in metrics])
        rows.append([m.eval_mean_return for m in metrics])
    if any(g != grids[0] for g in grids):
        raise ConfigError(f"evaluation grids differ across seeds in {run_dir}")
    seeds = [int(d.name.split("_", 1)[1]) for d in dirs]
    return grids[0], np.array(rows), seeds


def aggregate(run_dir, name=None):
    """Summarize a run directory and write ``summary.json`` and ``curve.dat``."""
    run_dir = Path(run_dir)
    steps, returns, seeds = load_curves(run_dir)
    summary = summarize(name or run_dir.name, (steps, returns), seeds)
    (run_dir / "summary.json").write_text(json.dumps(summary.to_dict(), indent=2) + "\n", encoding="utf-8")
    write_dat(run_dir / "curve.dat", summary)
    return summary


def write_dat(path, summary):
    """Whitespace-separated ``step mean lo hi`` rows for gnuplot."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {summary.name}: step mean lo hi (95% t interval over {len(summary.seeds)} seeds)\n")
        for row in zip(summary.steps, summary.mean, summary.lo, summary.hi):
            fh.write("{} {:.10g} {:.10g} {:.10g}\n".format(*row))
