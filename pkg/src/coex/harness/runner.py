"""Run seeds and sweeps, writing one directory per run.

Layout under the output root::

    <name>/config.json
    <name>/seed_<s>/metrics.csv       evaluation curve
    <name>/seed_<s>/params.coex       final parameters
    <name>/seed_<s>/trace.jsonl       final evaluation episodes (optional)
    <name>/seed_<s>/counts.json       count tables (optional)
    <name>/summary.json, curve.dat    cross-seed aggregate
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from coex import ndgrad as nd
from coex.harness.stats import aggregate
from coex.marlcore.training import run_training, write_metrics

log = logging.getLogger(__name__)

OUT_ENV = "COEX_OUT_DIR"


def output_root(spec_out_dir=None, override=None):
    """Output root: explicit override, then $COEX_OUT_DIR, then the config's value."""
    if override:
        return Path(override)
    env = os.environ.get(OUT_ENV)
    if env:
        return Path(env)
    return Path(spec_out_dir or "runs")


def write_config(spec, run_dir):
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n", encoding="utf-8")


def run_seed(spec, seed, root, trace=False, dump_counts=False):
    """Train one seed; returns the seed directory."""
    seed_dir = spec.run_dir(root) / f"seed_{seed}"
    seed_dir.mkdir(parents=True, exist_ok=True)
    trace_path = seed_dir / "trace.jsonl" if trace else None
    if trace_path is not None and trace_path.exists():
        trace_path.unlink()
    result = run_training(spec.make_env(), spec.config, seed, spec.total_steps, spec.eval_interval,
                          spec.eval_episodes, trace_path=trace_path)
    write_metrics(seed_dir / "metrics.csv", result.metrics)
    nd.save_params(seed_dir / "params.coex", result.learner.params)
    if dump_counts:
        result.learner.counts.dump(seed_dir / "counts.json", result.learner.keyer)
    log.info("%s seed %d done: final return %.3f", spec.name, seed, result.metrics[-1].eval_mean_return)
    return seed_dir


def _job(args):
    spec, seed, root, trace, dump_counts = args
    return str(run_seed(spec, seed, root, trace, dump_counts))


def _map(jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_job, jobs))


def default_workers(n_jobs):
    return max(1, min(os.cpu_count() or 1, n_jobs))


def run_experiment(spec, root, seeds=None, workers=None, trace=False, dump_counts=False):
    """Train the listed seeds (all by default) and aggregate whatever seeds exist."""
    seeds = list(spec.seeds if seeds is None else seeds)
    write_config(spec, spec.run_dir(root))
    jobs = [(spec, s, root, trace, dump_counts) for s in seeds]
    _map(jobs, workers or default_workers(len(jobs)))
    return aggregate(spec.run_dir(root), name=spec.name)


@dataclass
class Ranked:
    rank: int
    label: str
    max_return: float
    average_return: float
    run_dir: str


def rank_cells(labels, summaries):
    """Order cells by maximum evaluation return; ties keep grid order."""
    order = sorted(range(len(labels)), key=lambda i: -summaries[i].max_return)
    return [Ranked(r + 1, labels[i], summaries[i].max_return, summaries[i].average_return, summaries[i].name)
            for r, i in enumerate(order)]


def sweep(cells, root, workers=None, name="sweep"):
    """Run every grid cell, then write ``ranking.csv`` and ``best.json``."""
    root = Path(root)
    jobs = []
    for cell in cells:
        write_config(cell.spec, cell.spec.run_dir(root))
        jobs.extend((cell.spec, s, root, False, False) for s in cell.spec.seeds)
    _map(jobs, workers or default_workers(len(jobs)))
    summaries = [aggregate(cell.spec.run_dir(root), name=cell.spec.name) for cell in cells]
    ranking = rank_cells([c.label for c in cells], summaries)
    out = root / name
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ranking.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "cell", "max_return", "average_return", "run"])
        for r in ranking:
            w.writerow([r.rank, r.label, f"{r.max_return:.6g}", f"{r.average_return:.6g}", r.run_dir])
    best = cells[[c.label for c in cells].index(ranking[0].label)]
    (out / "best.json").write_text(json.dumps({"cell": best.label, **best.spec.to_dict()}, indent=2) + "\n",
                                   encoding="utf-8")
    return ranking
