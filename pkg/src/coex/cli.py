"""Command-line entry point: ``coex bandit | train | sweep | report``.

Exit status is 0 on success, 1 for configuration errors and 2 when
training aborts on a non-finite value.
"""

from __future__ import annotations

import argparse
import logging
import sys

from coex.banditlab import VARIANTS, run_game, write_results
from coex.errors import ConfigError, NumericalError
from coex.harness.config import parse_config, parse_grid
from coex.harness.report import report
from coex.harness.runner import output_root, run_experiment, sweep

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2

log = logging.getLogger("coex")


def _seed_list(raw):
    """``N`` means seeds 0..N-1; a comma list is taken literally."""
    try:
        if "," in raw:
            seeds = [int(x) for x in raw.split(",") if x.strip()]
        else:
            seeds = list(range(int(raw)))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {raw!r}") from None
    if not seeds or min(seeds) < 0:
        raise argparse.ArgumentTypeError("need at least one nonnegative seed")
    return seeds


def cmd_bandit(args):
    root = output_root("runs", args.out)
    variants = args.variant or list(VARIANTS)
    p0s = args.suboptimality or [0.0, 0.4, 0.8]
    results = []
    for variant in variants:
        for p0 in p0s:
            res = run_game(variant, args.agents, args.actions, p0, args.horizon, args.seeds, c=args.c,
                           random_ties=args.random_ties)
            s = res.summary()
            print(f"{variant:14s} p0={p0:<4g} final cum regret {s['mean_cum_regret'][-1]:10.1f} "
                  f"+- {s['se_cum_regret'][-1]:.1f}  opt rate {s['mean_opt_rate'][-1]:.3f}")
            results.append(res)
    for path in write_results(results, root):
        log.info("wrote %s", path)
    return EXIT_OK


def cmd_train(args):
    spec = parse_config(args.config)
    root = output_root(spec.out_dir, args.out)
    seeds = [args.seed] if args.seed is not None else None
    summary = run_experiment(spec, root, seeds=seeds, workers=args.workers, trace=args.trace,
                             dump_counts=args.dump_counts)
    print(f"{spec.name}: seeds {summary.seeds} average return {summary.average_return:.4f} "
          f"max return {summary.max_return:.4f} -> {spec.run_dir(root)}")
    return EXIT_OK


def cmd_sweep(args):
    cells = parse_grid(args.grid)
    spec0 = cells[0].spec
    root = output_root(spec0.out_dir, args.out)
    name = spec0.name.split("/", 1)[0]
    ranking = sweep(cells, root, workers=args.workers, name=name)
    for r in ranking:
        print(f"{r.rank:3d}  max {r.max_return:.4f}  avg {r.average_return:.4f}  {r.label}")
    print(f"ranking -> {root / name / 'ranking.csv'}")
    return EXIT_OK


def cmd_report(args):
    index = report(args.dir)
    for run in index["runs"]:
        flag = "  (single seed)" if run["single_seed"] else ""
        print(f"{run['name']}: average {run['average_return']:.4f} max {run['max_return']:.4f}{flag}")
    for c in index["comparisons"]:
        verdict = "significant" if c["significant"] else "not significant"
        print(f"{c['a']} vs {c['b']}: t={c['t']:.3f} p={c['p']:.4g} ({verdict})")
    for fig in index["figures"]:
        log.info("figure %s", fig)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="coex", description=__doc__.splitlines()[0])
    parser.add_argument("-q", "--quiet", action="store_true", help="only print results")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bandit", help="repeated multi-player Bernoulli game")
    b.add_argument("--variant", action="append", choices=VARIANTS, help="repeatable; default all four")
    b.add_argument("--agents", type=int, default=8)
    b.add_argument("--actions", type=int, default=3)
    b.add_argument("--suboptimality", type=float, action="append", help="repeatable; default 0.0 0.4 0.8")
    b.add_argument("--horizon", type=int, default=30_000)
    b.add_argument("--seeds", type=_seed_list, default=list(range(50)), help="count N or comma list")
    b.add_argument("--c", type=float, default=1.0, help="UCB exploration constant")
    b.add_argument("--random-ties", action="store_true", help="seeded random tie-breaking")
    b.add_argument("--out", help="output directory (default $COEX_OUT_DIR or runs)")
    b.set_defaults(func=cmd_bandit)

    t = sub.add_parser("train", help="train one config file")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, help="single seed; default every seed in the config")
    t.add_argument("--trace", action="store_true", help="dump final evaluation episodes as JSON lines")
    t.add_argument("--dump-counts", action="store_true", help="dump count tables as JSON")
    t.add_argument("--workers", type=int, help="parallel seed processes")
    t.add_argument("--out", help="output root (default $COEX_OUT_DIR, then out_dir)")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="grid search over a grid file")
    s.add_argument("--grid", required=True)
    s.add_argument("--workers", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="aggregate runs, compare and plot")
    r.add_argument("--dir", required=True)
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
