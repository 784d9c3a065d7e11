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

"""Aggregates episode records into rank tables and tests them.

Records are summarised per configuration and problem (a game at a
budget) into a win rate and a mean score. Within every problem the
algorithms are ranked by win rate, then mean score, with tied
algorithms sharing the average of their ranks, and the ranks are
averaged over problems. The Friedman test checks whether the algorithms
differ at all, and pairwise Wilcoxon signed-rank tests on the
per-problem ranks say which pairs do.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from tournament_handler import RunRecord

CELL = ["game", "budget"]
CONFIG = ["agent", "C", "RL", "Q"]
EXACT_WILCOXON_LIMIT = 20


class EmptyCell(ValueError):
    """Raised when there are no successful episodes to summarise."""


class DegenerateInput(ValueError):
    """Raised when a test is given data it cannot say anything about."""


def aggregate(records: Iterable[RunRecord],
              won_only: bool = False) -> pd.DataFrame:
    """Summarises records per problem and configuration.

    Args:
        records: Episode records; failed episodes are skipped.
        won_only: Average the score over won episodes only. A
            configuration that never won gets a NaN mean score.

    Returns:
        One row per (game, budget, agent, C, RL, Q) with the columns
        win_rate, mean_score and episodes, in first-seen order.

    Raises:
        EmptyCell: If no record describes a successful episode.

    Example:
        >>> records = [RunRecord("twoarm", "MCTS", 250, 0.5, 10, None, 0, i,
        ...                      win, 1.0, 1, 250) for i, win in
        ...            enumerate([True, True, False, True])]
        >>> aggregate(records)["win_rate"].tolist()
        [0.75]
    """
    rows = [{
        "game": record.game, "budget": record.budget, "agent": record.agent,
        "C": record.c, "RL": record.rl,
        "Q": math.nan if record.q is None else record.q,
        "win": float(record.win), "score": record.score
    } for record in records if not record.failed]
    if not rows:
        raise EmptyCell("No successful episodes to aggregate")

    frame = pd.DataFrame(rows)
    frame["won_score"] = frame["score"].where(frame["win"] == 1.0)
    score_column = "won_score" if won_only else "score"
    grouped = frame.groupby(CELL + CONFIG, sort=False, dropna=False)
    summary = grouped.agg(win_rate=("win", "mean"),
                          mean_score=(score_column, "mean"),
                          episodes=("win", "size")).reset_index()
    logging.info("Aggregated %d episodes into %d configurations.",
                 len(frame), len(summary))
    return summary


def _sorted_best_first(summary: pd.DataFrame) -> pd.DataFrame:
    return summary.sort_values(["win_rate", "mean_score"],
                               ascending=False, na_position="last",
                               kind="mergesort")


def best_per_problem(summary: pd.DataFrame) -> pd.DataFrame:
    """Keeps each agent's best configuration on every problem.

    Best means the highest win rate, then the highest mean score; ties
    keep the configuration seen first.
    """
    best = _sorted_best_first(summary).groupby(
        CELL + ["agent"], sort=False).head(1)
    return best.sort_index().reset_index(drop=True)


def treatment_label(row: pd.Series, by: Sequence[str]) -> str:
    """Names a ranked treatment, e.g. "MCTS" or "MCTS C=0.5 RL=10"."""
    parts = []
    for column in by:
        value = row[column]
        if column == "agent":
            parts.append(str(value))
        elif not (isinstance(value, float) and math.isnan(value)):
            parts.append(f"{column}={value:g}")
    return " ".join(parts)


def midranks(keys: Sequence[tuple]) -> np.ndarray:
    """Ranks keys from best (largest) to worst, ties sharing midranks."""
    order = sorted(set(keys), reverse=True)
    position = {key: i for i, key in enumerate(order)}
    return stats.rankdata([position[key] for key in keys], method="average")


@dataclass
class RankTable:
    """Per-problem ranks of every treatment and their averages.

    Attributes:
        ranks: Rows are (game, budget) problems, columns are
            treatments; NaN where a treatment did not play a problem.
        average: The mean rank of each treatment, best first.
    """
    ranks: pd.DataFrame
    average: pd.Series

    def complete_ranks(self) -> pd.DataFrame:
        """The problems every treatment played."""
        return self.ranks.dropna()


def _rank_key(row: pd.Series) -> tuple[float, float]:
    score = row["mean_score"]
    return row["win_rate"], -math.inf if math.isnan(score) else score


def rank_algorithms(summary: pd.DataFrame,
                    by: Sequence[str] = ("agent",)) -> RankTable:
    """Ranks treatments within every problem and averages the ranks.

    A treatment is a distinct value of the by columns: ("agent",) ranks
    algorithms, ("agent", "C", "RL", "Q") ranks full configurations.
    When a treatment has several configurations on one problem only its
    best counts.

    Args:
        summary: Output of aggregate() or best_per_problem().
        by: The columns that identify a treatment.

    Returns:
        The RankTable.

    Raises:
        EmptyCell: If the summary is empty.
    """
    if summary.empty:
        raise EmptyCell("No configurations to rank")
    by = list(by)
    frame = _sorted_best_first(summary).copy()
    frame["treatment"] = frame.apply(treatment_label, axis=1, by=by)
    frame = frame.groupby(CELL + ["treatment"], sort=False).head(1)

    cells = []
    for cell, group in frame.groupby(CELL, sort=True):
        keys = [_rank_key(row) for _, row in group.iterrows()]
        cells.append(pd.Series(midranks(keys), index=group["treatment"].values,
                               name=cell))
    ranks = pd.DataFrame(cells)
    ranks.index = pd.MultiIndex.from_tuples(ranks.index, names=CELL)
    average = ranks.mean(axis=0).sort_values(kind="mergesort")
    average.name = "average rank"
    logging.info("Ranked %d treatments over %d problems.",
                 len(ranks.columns), len(ranks))
    return RankTable(ranks, average)


def friedman_test(matrix: Sequence[Sequence[float]]) -> tuple[float, float]:
    """The Friedman test over blocks (rows) and treatments (columns).

    Values are ranked within each block with midranks for ties and the
    chi-square statistic is corrected for ties. Blocks that are tied
    throughout give a statistic of 0.

    Args:
        matrix: One row per block, one column per treatment.

    Returns:
        The statistic and its chi-square p-value with k - 1 degrees of
        freedom.

    Raises:
        DegenerateInput: For fewer than two blocks or treatments. Data
            tied within every block does not raise; it returns
            (0.0, 1.0).
    """
    data = np.asarray(matrix, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] < 2:
        raise DegenerateInput(
            "The Friedman test needs at least two blocks and two treatments")
    n, k = data.shape
    ranks = stats.rankdata(data, axis=1, method="average")
    rank_sums = ranks.sum(axis=0)
    statistic = 12 / (n * k * (k + 1)) * np.sum(rank_sums ** 2) \
        - 3 * n * (k + 1)

    ties = 0.0
    for row in data:
        _, counts = np.unique(row, return_counts=True)
        ties += np.sum(counts ** 3 - counts)
    correction = 1 - ties / (n * (k ** 3 - k))
    if correction <= 0:
        return 0.0, 1.0
    statistic = max(float(statistic / correction), 0.0)
    return statistic, float(stats.chi2.sf(statistic, k - 1))


def _exact_signed_rank_p(ranks: np.ndarray, statistic: float) -> float:
    """Two-sided p-value from the exact null distribution of W+.

    Every sign assignment is equally likely; midranks are doubled so the
    distribution can be counted over integers.
    """
    doubled = np.rint(2 * ranks).astype(int)
    counts = np.zeros(doubled.sum() + 1)
    counts[0] = 1
    for rank in doubled:
        shifted = np.zeros_like(counts)
        shifted[rank:] = counts[:len(counts) - rank]
        counts = counts + shifted
    probabilities = counts / counts.sum()
    observed = int(round(2 * statistic))
    lower = probabilities[:observed + 1].sum()
    upper = probabilities[observed:].sum()
    return float(min(1.0, 2 * min(lower, upper)))


def wilcoxon_signed_rank(x: Sequence[float],
                         y: Sequence[float]) -> tuple[float, float]:
    """The two-sided Wilcoxon signed-rank test on paired values.

    Zero differences are dropped and tied absolute differences share
    midranks. The statistic is W+, the rank sum of positive differences.
    The p-value is exact for up to 20 nonzero differences and uses the
    tie-corrected normal approximation above that.

    Example:
        >>> wilcoxon_signed_rank([2, 3, 4, 5, 6, 7], [1, 1, 1, 1, 1, 1])
        (21.0, 0.03125)

    Raises:
        ValueError: If x and y differ in length.
        DegenerateInput: If every difference is zero.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("Paired samples must have the same length")
    differences = (x - y)[x != y]
    if differences.size == 0:
        raise DegenerateInput("All paired differences are zero")
    ranks = stats.rankdata(np.abs(differences), method="average")
    statistic = float(ranks[differences > 0].sum())
    n = differences.size
    if n <= EXACT_WILCOXON_LIMIT:
        return statistic, _exact_signed_rank_p(ranks, statistic)

    _, counts = np.unique(np.abs(differences), return_counts=True)
    variance = n * (n + 1) * (2 * n + 1) / 24 \
        - np.sum(counts ** 3 - counts) / 48
    z = (statistic - n * (n + 1) / 4) / math.sqrt(variance)
    return statistic, float(min(1.0, 2 * stats.norm.sf(abs(z))))


def posthoc_wilcoxon(table: RankTable, alpha: float = 0.01) -> pd.DataFrame:
    """Wilcoxon signed-rank tests between every pair of treatments.

    Pairs are matched on the problems every treatment played. A pair
    whose ranks never differ gets a p-value of 1.

    Args:
        table: The rank table.
        alpha: The significance level.

    Returns:
        One row per pair with the columns a, b, statistic, p_value and
        significant, in average-rank order.
    """
    ranks = table.complete_ranks()
    rows = []
    for a, b in itertools.combinations(table.average.index, 2):
        try:
            statistic, p_value = wilcoxon_signed_rank(ranks[a], ranks[b])
        except DegenerateInput:
            logging.warning("Ranks of '%s' and '%s' never differ.", a, b)
            statistic, p_value = 0.0, 1.0
        rows.append({"a": a, "b": b, "statistic": statistic,
                     "p_value": p_value, "significant": p_value < alpha})
    return pd.DataFrame(rows, columns=["a", "b", "statistic", "p_value",
                                       "significant"])


def rank_table_frame(table: RankTable) -> pd.DataFrame:
    """The per-problem ranks with the average ranks as a last row."""
    frame = table.ranks[list(table.average.index)].copy()
    frame.index = [f"{game} @ {budget}" for game, budget in frame.index]
    frame.loc[table.average.name] = table.average
    return frame


def write_rank_table(table: RankTable, path: str, fmt: str = "text"):
    """Writes a rank table as CSV or as an aligned text table.

    Raises:
        ValueError: For an unknown format.
        OSError: If the file cannot be written.
    """
    frame = rank_table_frame(table)
    if fmt == "csv":
        frame.to_csv(path, index_label="problem")
    elif fmt == "text":
        with open(path, "w", encoding="UTF-8") as out_file:
            out_file.write(frame.to_string(float_format="{:.2f}".format))
            out_file.write("\n")
    else:
        raise ValueError(f"Unknown rank table format '{fmt}'")
    logging.info("Wrote rank table to %s.", path)
