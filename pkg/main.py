# Copyright 2021 Charles Goldstraw
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
# implied. See the License for the specific language governing
# permissions and limitations under the License.

"""Command-line entry point of the tree search benchmark.

Subcommands:
  run      play repeated episodes of one agent configuration
  sweep    play a whole parameter grid read from a JSON file
  analyze  rank the algorithms in a records CSV and test the ranks
  list     show the available games and agents

Defaults for every option come from config.json.
"""
import argparse
import logging
import sys
from typing import Optional, Sequence

from config_handler import ConfigError, read_config, read_sweep
from games import GAMES
import rank_analysis
import tournament_handler as th


def configure_logging():
    """Sets up the root logger from the log_file and log_level fields."""
    log_file, log_level = read_config("log_file", "log_level")
    level = logging.getLevelName(log_level.upper())
    if not isinstance(level, int):
        level = logging.INFO
    logging.basicConfig(
        level=level,
        format='[%(levelname)s] %(asctime)s - %(message)s',
        datefmt='%d-%b-%y %H:%M:%S',
        filename=log_file,
        encoding='utf-8')


def build_parser() -> argparse.ArgumentParser:
    budgets, default_c, default_rl, q, repetitions, seed, workers = \
        read_config("budgets", "default_c", "default_rl", "mixmax_q",
                    "repetitions", "master_seed", "workers")
    parser = argparse.ArgumentParser(
        description="Benchmark ordinal and numeric Monte Carlo tree search.")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="play one agent configuration")
    run.add_argument("--game", required=True,
                     help='game config, e.g. "gapworld p=0.9"')
    run.add_argument("--agent", required=True, choices=list(th.AGENTS))
    run.add_argument("--budget", type=int, default=budgets[0],
                     help="forward-model calls per decision")
    run.add_argument("--c", type=float, default=default_c)
    run.add_argument("--rl", type=int, default=default_rl)
    run.add_argument("--q", type=float, default=q,
                     help="MixMax weight of the maximum")
    run.add_argument("--seed", type=int, default=seed)
    run.add_argument("--reps", type=int, default=repetitions)
    run.add_argument("--out", default="records.csv")
    run.add_argument("--format", choices=["csv", "json"], default="csv")

    sweep = commands.add_parser("sweep", help="play a parameter grid")
    sweep.add_argument("grid", help="JSON sweep file")
    sweep.add_argument("--workers", type=int, default=workers)
    sweep.add_argument("--out", default="records.csv")
    sweep.add_argument("--format", choices=["csv", "json"], default="csv")

    analyze = commands.add_parser("analyze", help="rank recorded results")
    analyze.add_argument("records", help="records CSV")
    analyze.add_argument("--won-only", action="store_true",
                         help="average scores over won episodes only")
    analyze.add_argument("--by-config", action="store_true",
                         help="rank full configurations, not algorithms")
    analyze.add_argument("--out", help="file for the rank table")
    analyze.add_argument("--format", choices=["text", "csv"], default="text")

    commands.add_parser("list", help="show games and agents")
    return parser


def _run_settings() -> dict:
    recommendation, pb_max_depth = read_config("recommendation",
                                               "pb_max_depth")
    return {"recommendation": recommendation, "pb_max_depth": pb_max_depth}


def command_run(args: argparse.Namespace):
    timed = read_config("record_wall_time")[0]
    q = args.q if args.agent == th.MIXMAX_AGENT else None
    spec = th.RunSpec(args.game, args.agent, args.c, args.rl, args.budget,
                      args.reps, args.seed, q, **_run_settings())
    records = (th.run_episode(spec, episode, timed)
               for episode in range(spec.repetitions))
    count = th.write_output(records, args.format, args.out)
    print(f"Wrote {count} records to {args.out}")


def command_sweep(args: argparse.Namespace):
    timed = read_config("record_wall_time")[0]
    grid = th.SweepGrid.from_dict(read_sweep(args.grid), **_run_settings())
    records = th.iter_matrix(grid, args.workers, timed)
    count = th.write_output(records, args.format, args.out)
    print(f"Wrote {count} records to {args.out}")


def command_analyze(args: argparse.Namespace):
    alpha = read_config("significance_level")[0]
    summary = rank_analysis.aggregate(th.read_records(args.records),
                                      won_only=args.won_only)
    if args.by_config:
        table = rank_analysis.rank_algorithms(summary, by=rank_analysis.CONFIG)
    else:
        table = rank_analysis.rank_algorithms(
            rank_analysis.best_per_problem(summary))
    print(rank_analysis.rank_table_frame(table).to_string(
        float_format="{:.2f}".format))

    complete = table.complete_ranks()
    try:
        statistic, p_value = rank_analysis.friedman_test(complete.to_numpy())
    except rank_analysis.DegenerateInput as error:
        logging.warning("Friedman test skipped: %s", error)
        print(f"Friedman test skipped: {error}")
    else:
        logging.info("Friedman statistic %.4f, p = %.4g", statistic, p_value)
        print(f"\nFriedman chi-square {statistic:.4f}, p = {p_value:.4g}")
        posthoc = rank_analysis.posthoc_wilcoxon(table, alpha)
        print(f"\nWilcoxon signed-rank tests (alpha = {alpha}):")
        print(posthoc.to_string(index=False))

    if args.out:
        rank_analysis.write_rank_table(table, args.out, args.format)


def command_list(_args: argparse.Namespace):
    print("Games:")
    for name, game in GAMES.items():
        print(f"  {name:<10} {game.__doc__.splitlines()[0]}")
        print(f"  {'':<10} parameters: {', '.join(game.PARAMETERS)}")
    print("Agents:")
    for name, description in th.AGENT_DESCRIPTIONS.items():
        print(f"  {name:<10} {description}")


COMMANDS = {
    "run": command_run,
    "sweep": command_sweep,
    "analyze": command_analyze,
    "list": command_list
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except ConfigError as error:
        logging.critical("Stopping on a config error: %s", error)
        print(f"Config error: {error}", file=sys.stderr)
        return 2
    except rank_analysis.EmptyCell as error:
        logging.error("Nothing to analyze: %s", error)
        print(f"Nothing to analyze: {error}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
