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

"""Plays benchmark episodes and parameter sweeps and stores their records.

A RunSpec names a game, an agent and its parameters. Each episode plays
one full game, running a fresh search with a new metered forward model
at every decision point, and produces one RunRecord. Sweeps expand a
grid of games, budgets, agents and parameters into specs with derived
seeds, play every episode (optionally in a process pool) and return the
records in grid order, so the output does not depend on scheduling.
"""
import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Iterator, Optional

from config_handler import ConfigError
from games import make_game
from mcts_engine import (Estimator, EstimatorKind, Recommendation,
                         SearchConfig, SearchResult, run_search)
from mdp_core import (SEED_LIMIT, GameStatus, MeteredModel, RandomSource,
                      State, derive_seed)
from pb_mcts import run_search_pb

PB_AGENT = "PB-MCTS"
MIXMAX_AGENT = "MixMax"

AGENTS = {
    "MCTS": EstimatorKind.AVERAGE,
    "O-MCTS": EstimatorKind.BORDA,
    "N-MCTS": EstimatorKind.NODE_NORMALIZED,
    MIXMAX_AGENT: EstimatorKind.MIXMAX,
    PB_AGENT: None
}

AGENT_DESCRIPTIONS = {
    "MCTS": "UCT with the average mapped reward",
    "O-MCTS": "UCT with Borda scores of ordinal outcomes",
    "N-MCTS": "UCT with rewards normalized per node",
    MIXMAX_AGENT: "UCT blending the best and the average reward by Q",
    PB_AGENT: "preference-based search with RUCB duels"
}

CSV_HEADER = ["game", "agent", "budget", "C", "RL", "Q", "seed", "episode",
              "win", "score", "decisions", "fm_calls", "ms"]


@dataclass(frozen=True)
class RunSpec:
    """One agent configuration on one game.

    Attributes:
        game: The game config text, e.g. "gapworld p=0.9".
        agent: One of AGENTS.
        c: The exploration trade-off.
        rl: The rollout length.
        budget: Forward-model calls per decision.
        repetitions: Episodes to play.
        seed: The master seed of the spec's episodes.
        q: The MixMax weight; always None for the other agents.
        recommendation: The final-move rule of the UCT agents.
        pb_max_depth: Cap on the preference-based subtree depth.
    """
    game: str
    agent: str
    c: float
    rl: int
    budget: int
    repetitions: int = 1
    seed: int = 0
    q: Optional[float] = None
    recommendation: str = Recommendation.MAX_VISITS.value
    pb_max_depth: int = 4

    def __post_init__(self):
        if self.agent not in AGENTS:
            raise ConfigError(f"Unknown agent '{self.agent}'")
        make_game(self.game)
        if self.agent == MIXMAX_AGENT:
            if self.q is None:
                raise ConfigError("A MixMax agent needs a Q value")
            object.__setattr__(self, "q", float(self.q))
        else:
            object.__setattr__(self, "q", None)
        object.__setattr__(self, "c", float(self.c))
        if not (math.isfinite(self.c) and self.c >= 0):
            raise ConfigError(f"C must be a number >= 0: {self.c}")
        if self.rl < 1:
            raise ConfigError(f"RL must be positive: {self.rl}")
        if self.budget < 1:
            raise ConfigError(f"Budget must be positive: {self.budget}")
        if self.repetitions < 1:
            raise ConfigError(
                f"Repetitions must be at least 1: {self.repetitions}")
        if not 0 <= self.seed < SEED_LIMIT:
            raise ConfigError(f"Seed must be a 64-bit unsigned int: {self.seed}")
        if self.pb_max_depth < 2:
            raise ConfigError(
                f"pb_max_depth must be at least 2: {self.pb_max_depth}")
        try:
            Recommendation(self.recommendation)
        except ValueError:
            raise ConfigError(
                f"Unknown recommendation '{self.recommendation}'") from None

    def search_config(self) -> SearchConfig:
        kind = AGENTS[self.agent] or EstimatorKind.AVERAGE
        estimator = Estimator(kind, self.q if self.q is not None else 0.25)
        return SearchConfig(estimator, self.c, self.rl, self.budget,
                            recommendation=Recommendation(self.recommendation))


@dataclass
class RunRecord:
    """The result of one episode.

    A failed episode keeps its spec fields, leaves the result fields
    None and holds the error text.
    """
    game: str
    agent: str
    budget: int
    c: float
    rl: int
    q: Optional[float]
    seed: int
    episode: int
    win: Optional[bool] = None
    score: Optional[float] = None
    decisions: Optional[int] = None
    fm_calls: Optional[int] = None
    ms: float = field(default=0.0, compare=False)
    error: Optional[str] = field(default=None, compare=False)

    @property
    def failed(self) -> bool:
        return self.win is None


def _decide(spec: RunSpec, m: MeteredModel, state: State,
            rng: RandomSource) -> SearchResult:
    if spec.agent == PB_AGENT:
        return run_search_pb(m, state, spec.search_config(),
                             max_depth=spec.pb_max_depth, rng=rng)
    return run_search(m, state, spec.search_config(), rng=rng)


def _blank_record(spec: RunSpec, episode: int) -> RunRecord:
    return RunRecord(spec.game, spec.agent, spec.budget, spec.c, spec.rl,
                     spec.q, spec.seed, episode)


def run_episode(spec: RunSpec, episode: int = 0,
                timed: bool = True) -> RunRecord:
    """Plays one full game with the spec's agent.

    The episode's seed is derived from the spec's seed and the episode
    index. It is split into one stream for the real game and one for
    the agent, which hands a new child stream to every search.

    Args:
        spec: The agent configuration.
        episode: The episode index.
        timed: Whether to measure wall time; ms is 0 otherwise.

    Returns:
        The episode's RunRecord.
    """
    start = time.perf_counter()
    env_rng, agent_rng = RandomSource(derive_seed(spec.seed, episode)).spawn(2)
    env = make_game(spec.game)
    state = env.initial_state()
    decisions = calls = 0
    while not env.is_terminal(state):
        m = MeteredModel(env, spec.budget)
        result = _decide(spec, m, state, agent_rng.spawn(1)[0])
        decisions += 1
        calls += m.calls_used
        state = env.step(state, result.action, env_rng)

    outcome = env.outcome(state)
    record = _blank_record(spec, episode)
    record.win = outcome.status is GameStatus.WON
    record.score = float(outcome.score)
    record.decisions = decisions
    record.fm_calls = calls
    if timed:
        record.ms = round((time.perf_counter() - start) * 1000, 3)
    logging.info("%s on '%s' episode %d: %s with score %s in %d decisions.",
                 spec.agent, spec.game, episode,
                 "won" if record.win else "lost", record.score, decisions)
    return record


@dataclass(frozen=True)
class SweepGrid:
    """A grid of games, budgets, agents and parameters to sweep."""
    games: tuple[str, ...]
    budgets: tuple[int, ...]
    agents: tuple[str, ...]
    c_values: tuple[float, ...]
    rl_values: tuple[int, ...]
    q: float = 0.25
    repetitions: int = 1
    seed: int = 0
    recommendation: str = Recommendation.MAX_VISITS.value
    pb_max_depth: int = 4

    def __post_init__(self):
        for name in ("games", "budgets", "agents", "c_values", "rl_values"):
            values = tuple(getattr(self, name))
            if not values:
                raise ConfigError(f"Sweep grid has no {name}")
            object.__setattr__(self, name, values)
        if self.repetitions < 1:
            raise ConfigError(
                f"Repetitions must be at least 1: {self.repetitions}")

    @classmethod
    def from_dict(cls, grid: dict[str, Any], **settings) -> "SweepGrid":
        """Builds a grid from a read_sweep() dictionary."""
        return cls(grid["games"], grid["budgets"], grid["agents"],
                   grid["c_values"], grid["rl_values"], grid["q"],
                   grid["repetitions"], grid["seed"], **settings)

    def specs(self) -> list[RunSpec]:
        """Expands the grid in game, budget, agent, C, RL order.

        Each spec gets the seed derived from the grid seed and its
        position in that order.
        """
        specs = []
        for game in self.games:
            for budget in self.budgets:
                for agent in self.agents:
                    for c in self.c_values:
                        for rl in self.rl_values:
                            specs.append(RunSpec(
                                game, agent, c, rl, budget, self.repetitions,
                                derive_seed(self.seed, len(specs)), self.q,
                                self.recommendation, self.pb_max_depth))
        return specs


def _run_task(task: tuple[RunSpec, int, bool]) -> RunRecord:
    spec, episode, timed = task
    try:
        return run_episode(spec, episode, timed)
    except Exception as error:
        logging.warning("%s on '%s' episode %d failed: %s",
                        spec.agent, spec.game, episode, error)
        record = _blank_record(spec, episode)
        record.error = f"{type(error).__name__}: {error}"
        return record


def iter_matrix(grid: SweepGrid, workers: int = 1,
                timed: bool = True) -> Iterator[RunRecord]:
    """Yields the records of every episode of a grid in grid order.

    Episodes that raise become failed records instead of stopping the
    sweep.

    Args:
        grid: The sweep grid.
        workers: Processes to play episodes in; 1 plays them in-process.
        timed: Whether to measure wall time.
    """
    tasks = [(spec, episode, timed) for spec in grid.specs()
             for episode in range(spec.repetitions)]
    logging.info("Sweeping %d episodes with %d worker(s).",
                 len(tasks), workers)
    if workers <= 1:
        yield from map(_run_task, tasks)
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            yield from executor.map(_run_task, tasks)
    logging.info("Sweep finished.")


def run_matrix(grid: SweepGrid, workers: int = 1,
               timed: bool = True) -> list[RunRecord]:
    """Plays every episode of a grid; see iter_matrix."""
    return list(iter_matrix(grid, workers, timed))


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    return str(value)


def record_row(record: RunRecord) -> list[str]:
    """The CSV cells of a record, in CSV_HEADER order."""
    values = asdict(record)
    values["C"], values["RL"], values["Q"] = record.c, record.rl, record.q
    return [_format(values[column]) for column in CSV_HEADER]


def record_dict(record: RunRecord) -> dict[str, Any]:
    """The JSON object of a record, keyed like the CSV header."""
    return dict(zip(CSV_HEADER, (
        record.game, record.agent, record.budget, record.c, record.rl,
        record.q, record.seed, record.episode, record.win, record.score,
        record.decisions, record.fm_calls, record.ms)))


def write_output(records: Iterable[RunRecord], fmt: str = "csv",
                 path: str = "records.csv") -> int:
    """Writes records as CSV or JSON.

    CSV rows are written as the records arrive, so a sweep can be
    streamed straight to disk.

    Args:
        records: The records to write.
        fmt: "csv" or "json".
        path: The destination file.

    Returns:
        The number of records written.

    Raises:
        ConfigError: For an unknown format.
        OSError: If the file cannot be written.
    """
    written = 0
    if fmt == "csv":
        with open(path, "w", encoding="UTF-8", newline="") as out_file:
            writer = csv.writer(out_file, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for record in records:
                writer.writerow(record_row(record))
                out_file.flush()
                written += 1
    elif fmt == "json":
        rows = [record_dict(record) for record in records]
        with open(path, "w", encoding="UTF-8") as out_file:
            json.dump(rows, out_file, indent=2)
            out_file.write("\n")
        written = len(rows)
    else:
        raise ConfigError(f"Unknown output format '{fmt}'")
    logging.info("Wrote %d records to %s.", written, path)
    return written


def _optional(text: str, parse) -> Any:
    return parse(text) if text != "" else None


def parse_record(row: dict[str, str]) -> RunRecord:
    """Builds a RunRecord from one CSV row keyed by CSV_HEADER."""
    return RunRecord(
        game=row["game"],
        agent=row["agent"],
        budget=int(row["budget"]),
        c=float(row["C"]),
        rl=int(row["RL"]),
        q=_optional(row["Q"], float),
        seed=int(row["seed"]),
        episode=int(row["episode"]),
        win=_optional(row["win"], lambda text: text == "1"),
        score=_optional(row["score"], float),
        decisions=_optional(row["decisions"], int),
        fm_calls=_optional(row["fm_calls"], int),
        ms=float(row["ms"] or 0))


def read_records(path: str) -> list[RunRecord]:
    """Reads a records CSV written by write_output.

    Raises:
        ConfigError: If the file's header is not the records header.
        OSError: If the file cannot be read.
    """
    with open(path, "r", encoding="UTF-8", newline="") as in_file:
        reader = csv.DictReader(in_file)
        if reader.fieldnames != CSV_HEADER:
            raise ConfigError(f"{path} is not a records CSV")
        records = [parse_record(row) for row in reader]
    logging.info("Read %d records from %s.", len(records), path)
    return records
