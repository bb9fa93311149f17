"""Experiment plumbing: config files, seeded runs, sweeps, statistics, reports."""

from coex.harness.config import ExperimentSpec, GridCell, parse_config, parse_config_text, parse_grid, parse_grid_text
from coex.harness.report import report
from coex.harness.runner import output_root, rank_cells, run_experiment, run_seed, sweep
from coex.harness.stats import RunSummary, WelchResult, aggregate, summarize, t_half_width, welch_t_test

__all__ = [
    "ExperimentSpec",
    "GridCell",
    "RunSummary",
    "WelchResult",
    "aggregate",
    "output_root",
    "parse_config",
    "parse_config_text",
    "parse_grid",
    "parse_grid_text",
    "rank_cells",
    "report",
    "run_experiment",
    "run_seed",
    "summarize",
    "sweep",
    "t_half_width",
    "welch_t_test",
]
