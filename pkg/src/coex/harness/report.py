"""Post-pass over an output directory: aggregates, comparisons and figures."""

from __future__ import annotations

import itertools
import json
import re
from pathlib import Path

import numpy as np

from coex.errors import ConfigError
from coex.harness.plotting import plot_bandit, plot_curves
from coex.harness.stats import aggregate, seed_dirs, welch_t_test

_BANDIT = re.compile(r"bandit_(?P<variant>\w+?)_p(?P<p0>[0-9.]+)\.csv$")


def find_runs(root):
    root = Path(root)
    candidates = [root, *(p for p in root.rglob("*") if p.is_dir())]
    return sorted(d for d in candidates if not d.name.startswith("seed_") and seed_dirs(d))


def read_bandit_csv(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


def compare(summaries):
    """Pairwise Welch tests on per-seed average returns (runs with 2+ seeds)."""
    rows = []
    for a, b in itertools.combinations(summaries, 2):
        if len(a.seed_averages) < 2 or len(b.seed_averages) < 2:
            continue
        res = welch_t_test(a.seed_averages, b.seed_averages)
        rows.append({"a": a.name, "b": b.name, "mean_a": float(np.mean(a.seed_averages)),
                     "mean_b": float(np.mean(b.seed_averages)), "t": res.t, "p": res.p, "df": res.df,
                     "significant": res.significant})
    return rows


def report(root):
    """Aggregate every run under ``root`` and render figures; returns the index dict."""
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"report directory {root} does not exist")
    index = {"runs": [], "comparisons": [], "figures": []}
    summaries = []
    for run_dir in find_runs(root):
        name = str(run_dir.relative_to(root)) if run_dir != root else root.name
        s = aggregate(run_dir, name=name)
        summaries.append(s)
        index["figures"].append(str(plot_curves([s], run_dir / "curve.png", title=name)))
        index["runs"].append({"name": name, "dir": str(run_dir), "seeds": s.seeds,
                              "average_return": s.average_return, "max_return": s.max_return,
                              "single_seed": s.single_seed})
    if len(summaries) > 1:
        index["figures"].append(str(plot_curves(summaries, root / "curves.png")))
    index["comparisons"] = compare(summaries)

    by_p0 = {}
    for path in sorted(root.glob("bandit_*.csv")):
        m = _BANDIT.search(path.name)
        if m:
            by_p0.setdefault(m["p0"], {})[m["variant"]] = read_bandit_csv(path)
    for p0, results in sorted(by_p0.items()):
        fig = plot_bandit(results, root / f"bandit_p{p0}.png", title=f"sub-optimality {p0}")
        index["figures"].append(str(fig))
        index.setdefault("bandit", []).extend(
            {"variant": v, "p0": float(p0), "final_cum_regret": float(c["mean_cum_regret"][-1]),
             "final_opt_rate": float(c["mean_opt_rate"][-1])} for v, c in results.items())

    if not summaries and not by_p0:
        raise ConfigError(f"nothing to report under {root}: no seed_*/metrics.csv or bandit_*.csv files")
    (root / "report.json").write_text(json.dumps(index, indent=2) + "\n", encoding="utf-8")
    return index
