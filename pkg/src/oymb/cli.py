"""Command line entry point: ``oymb run | probe | validate-map``.

Exit codes: 0 success, 1 usage or input error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
from dataclasses import replace
import logging
import sys

import numpy as np

from . import harness
from .envs import DEFAULT_MAP_PATH, MapError, bfs_distances, load_map

RUN_EPILOG = """\
config file ([experiment] section; every key optional except task):
  task              mountaincar | robo_easy | robo_medium | robo_hard
  episodes          250 for every task [reported]
  runs              10 mountaincar, 5 robo tasks [reported]
  seed              0; run r uses seed + r
  out               results
  map               shipped default maze ({map})
  horizon           250 mountaincar, 150/150/300 robo easy/medium/hard [reported]
  batch_size        64 [reported]
  epsilon_start     1.0, annealed linearly per episode [reported]
  epsilon_end       0.01 [reported]
  gamma             0.98 [chosen: long horizons need a discount near 1]
  lr                0.001 [chosen: Adam default]
  warmup            batch_size transitions before the first update [chosen]
  her_terminal      true: hindsight successes end the episode, like real ones [chosen]
  her_rewrite_goal  false: relabeling changes the reward only [chosen]
  zero_init         false: start from an all-zero network instead of Glorot init

[arm NAME] sections (default: arms 'her' = uniform and 'her_oymb' = oymb):
  sampler           oymb | uniform
  lambda            guaranteed reward-1 fraction; 0.05 mountaincar, 0.25 robo [reported]
  delta             per-episode multiplier for lambda; 1 [reported]
  limit             clamp for lambda; equals lambda by default [reported]

writes run_<arm>.csv (episode,mean_cum_success,std_cum_success,mean_lambda)
and runs/<arm>_seed<seed>.csv per run.
""".format(map=DEFAULT_MAP_PATH)

PROBE_EPILOG = """\
config file ([probe] section):
  task              robo_easy [chosen]
  episodes          100 [reported]
  draws             1000 batches per episode [reported]
  probe_batch_size  1000 transitions per batch [chosen: makes 4%%, 2.5%%, 5.5%% exact]
  schedule          0:0.04, 25:0.025, 50:0.055 (start episode:lambda) [reported]
  seed              0
  plus the agent keys of 'run' (batch_size, gamma, lr, ...)

writes probe_oymb.csv and probe_uniform.csv
(episode,sampler,mean_prop,min_prop,max_prop).
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oymb", description="HER + OYMB replay sampler experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress of every run")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    run = sub.add_parser("run", help="multi-seed HER vs HER+OYMB comparison",
                         epilog=RUN_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    run.add_argument("--config", required=True, help="experiment config file")
    run.add_argument("--out", help="output directory (overrides the config's 'out')")
    run.add_argument("--seed", type=int, help="base seed (overrides the config's 'seed')")
    run.add_argument("--jobs", type=int, default=1, help="parallel worker processes (default 1)")

    probe = sub.add_parser("probe", help="minibatch reward-1 proportion probe",
                           epilog=PROBE_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    probe.add_argument("--config", required=True, help="probe config file")
    probe.add_argument("--out", required=True, help="output directory")

    vm = sub.add_parser("validate-map", help="check a maze file and print goal distances")
    vm.add_argument("--map", help=f"map file (default: {DEFAULT_MAP_PATH})")
    return parser


def _cmd_run(args) -> int:
    config = harness.load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    out = args.out or config.out
    results = harness.run_experiment(config, jobs=args.jobs)
    paths = harness.write_experiment(results, out)
    for name, result in results.items():
        agg = result.aggregate()
        if len(agg["mean_cum_success"]):
            print(f"{name}: final cumulative successes {agg['mean_cum_success'][-1]:.2f} "
                  f"+/- {agg['std_cum_success'][-1]:.2f} over {len(result.runs)} runs")
    for path in paths:
        print(f"wrote {path}")
    return 0


def _cmd_probe(args) -> int:
    config = harness.load_probe_config(args.config)
    result = harness.proportion_probe(config)
    for sampler, s in result.series.items():
        spread = s.max - s.min
        print(f"{sampler}: mean proportion {np.mean(s.mean):.4f}, mean max-min spread {np.mean(spread):.4f}")
    for path in harness.write_probe(result, args.out):
        print(f"wrote {path}")
    return 0


def _cmd_validate_map(args) -> int:
    maze = load_map(args.map)
    dist = bfs_distances(maze.walls, maze.start)
    print(f"start {maze.start}")
    for name, cell in maze.goals.items():
        print(f"{name} goal {cell}: BFS distance {dist[cell]}")
    return 0


COMMANDS = {"run": _cmd_run, "probe": _cmd_probe, "validate-map": _cmd_validate_map}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (harness.ConfigError, MapError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
