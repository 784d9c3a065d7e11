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

"""Counts ordinal outcomes per action and derives Borda scores.

An OutcomeTable records, for every action of a search node, how often
each distinct outcome was backed up through it. From those counts it
estimates the probability of an outcome, the probability of doing worse
than an outcome, the probability that one action beats another and the
Borda score of an action: its average probability of beating the other
actions.

The pairwise probabilities are kept up to date as outcomes arrive. For
every ordered pair the table stores the integer numerator

    K(a, b) = sum over sample pairs (x of a, y of b) of 2*[x > y] + [x = y]

so that P(a beats b) = K(a, b) / (2 n(a) n(b)). A new outcome o for a
adds 2 c(below o, b) + c(o, b) to K(a, b), which is the alpha-weighted
update alpha P + (1 - alpha) (P(below o | b) + P(o | b) / 2) with
alpha = n(a) / (n(a) + 1) multiplied through by its denominators.
"""
import bisect
import math
from typing import Iterable, Mapping

import numpy as np

from mdp_core import ActionId, Outcome


class OrdinalStatsError(Exception):
    """Base class for errors raised by an OutcomeTable."""


class UnknownAction(OrdinalStatsError, KeyError):
    """Raised for an action the table was not built with."""


class NoSamples(OrdinalStatsError):
    """Raised when a probability needs an action with no outcomes yet."""


class SameAction(OrdinalStatsError):
    """Raised when an action is compared with itself."""


class OutcomeTable:
    """Per-action outcome counts of one search node.

    Counts are kept in a dense array whose columns are the distinct
    outcomes observed so far, in ascending order, so the count of
    outcomes below a value is a prefix sum over a row.
    """

    def __init__(self, actions: Iterable[ActionId]):
        self.actions = tuple(actions)
        self._index = {action: i for i, action in enumerate(self.actions)}
        if len(self._index) != len(self.actions):
            raise ValueError("Actions of an OutcomeTable must be distinct")
        size = len(self.actions)
        self.ordinals: list[Outcome] = []
        self._counts = np.zeros((size, 0), dtype=np.int64)
        self._visits = np.zeros(size, dtype=np.int64)
        self._wins = np.zeros((size, size), dtype=np.int64)

    def _row(self, action: ActionId) -> int:
        try:
            return self._index[action]
        except KeyError:
            raise UnknownAction(action) from None

    def _require_samples(self, row: int):
        if self._visits[row] == 0:
            raise NoSamples(f"Action '{self.actions[row]}' has no outcomes")

    @property
    def total(self) -> int:
        """n_v, the number of outcomes recorded over all actions."""
        return int(self._visits.sum())

    def visits(self, action: ActionId) -> int:
        """n(a), the number of outcomes recorded for an action."""
        return int(self._visits[self._row(action)])

    def count(self, o: Outcome, action: ActionId) -> int:
        """c(o, a), how often an action produced an outcome."""
        row = self._row(action)
        column = bisect.bisect_left(self.ordinals, o)
        if column < len(self.ordinals) and self.ordinals[column] == o:
            return int(self._counts[row, column])
        return 0

    def count_below(self, o: Outcome, action: ActionId) -> int:
        """c(below o, a), how often an action did worse than an outcome."""
        row = self._row(action)
        column = bisect.bisect_left(self.ordinals, o)
        return int(self._counts[row, :column].sum())

    def record_outcome(self, action: ActionId, o: Outcome) -> "OutcomeTable":
        """Records one backed-up outcome for an action.

        Updates c(o, a), n(a) and n_v, then refreshes the pairwise
        numerators of every pair involving the action.

        Args:
            action: The action the outcome was obtained through.
            o: The backed-up outcome.

        Returns:
            The table itself.

        Raises:
            UnknownAction: If the action is not one of the table's.
        """
        row = self._row(action)
        column = bisect.bisect_left(self.ordinals, o)
        if column == len(self.ordinals) or self.ordinals[column] != o:
            self.ordinals.insert(column, o)
            self._counts = np.insert(self._counts, column, 0, axis=1)

        below = self._counts[:, :column].sum(axis=1)
        same = self._counts[:, column]
        self._wins[row] += 2 * below + same

        self._counts[row, column] += 1
        self._visits[row] += 1
        # The reverse direction follows from P(b > a) = 1 - P(a > b).
        self._wins[:, row] = 2 * self._visits * self._visits[row] \
            - self._wins[row]
        self._wins[row, row] = 0
        return self

    def prob_of(self, o: Outcome, action: ActionId) -> float:
        """P(o | a), the estimated probability of an outcome for an action.

        Raises:
            NoSamples: If the action has no recorded outcomes.
        """
        row = self._row(action)
        self._require_samples(row)
        return self.count(o, action) / int(self._visits[row])

    def prob_below(self, o: Outcome, action: ActionId) -> float:
        """P(below o | a), the probability of doing worse than an outcome.

        Raises:
            NoSamples: If the action has no recorded outcomes.
        """
        row = self._row(action)
        self._require_samples(row)
        return self.count_below(o, action) / int(self._visits[row])

    def pref_prob(self, a: ActionId, b: ActionId) -> float:
        """P(a beats b), counting ties as half a win.

        Example:
            >>> table = OutcomeTable(["a", "b"])
            >>> for value in (0.1, 1, 0.1):
            ...     _ = table.record_outcome("a", Outcome(2, value))
            >>> for value in (0.3, 0.35, 0.25):
            ...     _ = table.record_outcome("b", Outcome(2, value))
            >>> table.pref_prob("a", "b")
            0.3333333333333333

        Raises:
            SameAction: If a and b are the same action.
            NoSamples: If either action has no recorded outcomes.
        """
        row, column = self._row(a), self._row(b)
        if row == column:
            raise SameAction(f"Action '{a}' cannot be compared with itself")
        self._require_samples(row)
        self._require_samples(column)
        pairs = 2 * int(self._visits[row]) * int(self._visits[column])
        return int(self._wins[row, column]) / pairs

    def borda_score(self, action: ActionId) -> float:
        """B(a), the average probability of a beating each other action.

        A table with a single action scores it 1: nothing dominates it.

        Raises:
            NoSamples: If any action of the table has no outcomes.
        """
        row = self._row(action)
        if len(self.actions) == 1:
            self._require_samples(row)
            return 1.0
        wins = [self.pref_prob(action, other)
                for other in self.actions if other != action]
        return math.fsum(wins) / len(wins)

    def borda_scores(self) -> dict[ActionId, float]:
        """Returns the Borda score of every action."""
        return {action: self.borda_score(action) for action in self.actions}

    def counts(self) -> Mapping[ActionId, dict[Outcome, int]]:
        """Returns the nonzero counts as {action: {outcome: count}}."""
        return {
            action: {o: int(c) for o, c in zip(self.ordinals, row) if c}
            for action, row in zip(self.actions, self._counts)}

    def batch_preference_matrix(self) -> np.ndarray:
        """Recomputes P(a beats b) for every pair from the raw counts.

        Evaluates the density, below-probability and pairwise formulas
        directly, without the incrementally kept numerators. Pairs that
        involve an action without outcomes, and the diagonal, are NaN.
        """
        visits = self._visits.astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            density = self._counts / visits[:, np.newaxis]
        below = np.cumsum(density, axis=1) - density
        matrix = density @ (below + density / 2).T
        sampled = visits > 0
        matrix[~np.outer(sampled, sampled)] = np.nan
        np.fill_diagonal(matrix, np.nan)
        return matrix

    def preference_matrix(self) -> np.ndarray:
        """Returns the incrementally kept P(a beats b) matrix.

        Same layout as batch_preference_matrix().
        """
        pairs = 2 * np.outer(self._visits, self._visits).astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            matrix = self._wins / pairs
        matrix[pairs == 0] = np.nan
        np.fill_diagonal(matrix, np.nan)
        return matrix
