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

"""Preference-based MCTS, learning only from trajectory comparisons.

Each iteration selects a binary subtree instead of a path: at every node
a dueling-bandit rule (RUCB) picks two actions, both are followed down
to the depth cap, and the leaves are rolled out. Back at each node every
trajectory below the first action is compared with every trajectory
below the second, and the wins are stored in the node's duel matrix.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from mdp_core import (ActionId, BudgetExhausted, IllegalAction,
                      MeteredModel, Ordering, Outcome, RandomSource, State,
                      compare_outcomes)
from mcts_engine import ActionStats, SearchConfig, SearchResult, rollout


class TooFewActions(ValueError):
    """Raised when a duel is asked for among fewer than two actions."""


class DuelStats:
    """Pairwise duel results of one node's actions.

    wins[a, b] counts the comparisons a's trajectory won against b's,
    with ties counting half for each side.
    """

    def __init__(self, actions: Sequence[ActionId]):
        self.actions = tuple(actions)
        self.index = {action: i for i, action in enumerate(self.actions)}
        size = len(self.actions)
        self.wins = np.zeros((size, size))

    @property
    def comparisons(self) -> np.ndarray:
        """N(a, b) = W(a, b) + W(b, a)."""
        return self.wins + self.wins.T

    @property
    def total(self) -> int:
        return int(round(self.wins.sum()))

    def record(self, a: ActionId, b: ActionId, result: Ordering):
        """Stores one comparison of an a trajectory with a b trajectory."""
        i, j = self.index[a], self.index[b]
        if result is Ordering.GREATER:
            self.wins[i, j] += 1
        elif result is Ordering.LESS:
            self.wins[j, i] += 1
        else:
            self.wins[i, j] += 0.5
            self.wins[j, i] += 0.5

    def win_rates(self) -> dict[ActionId, float]:
        """Average row win rate of each action over the duels it played.

        Actions that never dueled are left out.
        """
        comparisons = self.comparisons
        rates = {}
        for action, i in self.index.items():
            played = comparisons[i] > 0
            if played.any():
                rates[action] = float(np.mean(
                    self.wins[i, played] / comparisons[i, played]))
        return rates


def upper_bounds(d: DuelStats, actions: Sequence[ActionId], C: float,
                 t: int) -> np.ndarray:
    """Optimistic pairwise win rates W/N + C sqrt(ln t / N).

    Pairs that never dueled are +inf and the diagonal is 1/2.
    """
    rows = [d.index[action] for action in actions]
    wins = d.wins[np.ix_(rows, rows)]
    comparisons = wins + wins.T
    with np.errstate(divide="ignore", invalid="ignore"):
        bounds = wins / comparisons + C * np.sqrt(math.log(t) / comparisons)
    bounds[comparisons == 0] = np.inf
    np.fill_diagonal(bounds, 0.5)
    return bounds


def rucb_select_pair(d: DuelStats, a_set: Sequence[ActionId], C: float,
                     rng: RandomSource,
                     t: Optional[int] = None) -> tuple[ActionId, ActionId]:
    """Chooses a champion and a challenger to duel.

    The champion is drawn from the actions whose optimistic win rate is
    at least 1/2 against everyone (all actions if there is none), taking
    the one with the highest mean optimistic row. The challenger is the
    action with the highest optimistic win rate against the champion.
    Ties are broken at random.

    Args:
        d: The node's duel statistics.
        a_set: The actions to choose from.
        C: The exploration trade-off.
        rng: Stream for tie-breaking.
        t: The time step, one more than the node's comparisons if None.

    Returns:
        Two distinct actions, champion first.

    Raises:
        TooFewActions: If fewer than two actions are given.
    """
    actions = tuple(a_set)
    if len(actions) < 2:
        raise TooFewActions("A duel needs at least two actions")
    t = t if t is not None else d.total + 1
    bounds = upper_bounds(d, actions, C, max(t, 1))
    others = ~np.eye(len(actions), dtype=bool)

    candidates = [i for i in range(len(actions))
                  if np.all(bounds[i][others[i]] >= 0.5)]
    candidates = candidates or list(range(len(actions)))
    means = {i: float(np.mean(bounds[i][others[i]])) for i in candidates}
    best = max(means.values())
    champion = rng.choice([i for i, mean in means.items() if mean == best])

    against = {j: bounds[j, champion] for j in range(len(actions))
               if j != champion}
    best = max(against.values())
    challenger = rng.choice([j for j, bound in against.items()
                             if bound == best])
    return actions[champion], actions[challenger]


def default_depth(budget: int, rollout_length: int,
                  max_depth: int = 4) -> int:
    """Subtree depth ceil(log2(budget / RL)), kept within [2, max_depth]."""
    depth = math.ceil(math.log2(max(budget / rollout_length, 1)))
    return max(2, min(max_depth, depth))


class PBNode:
    def __init__(self, state: State = None):
        self.state = state
        self.actions: tuple[ActionId, ...] = ()
        self.children: dict[ActionId, "PBNode"] = {}
        self.duels: Optional[DuelStats] = None

    @property
    def is_open(self) -> bool:
        return self.duels is not None

    def open(self, actions: Sequence[ActionId]):
        self.actions = tuple(actions)
        self.duels = DuelStats(self.actions)


@dataclass
class PBSearchResult(SearchResult):
    """A SearchResult that also counts trajectories per iteration."""
    trajectories: list[int] = field(default_factory=list)


class _SubtreeSearch:
    """State of one preference-based search."""

    def __init__(self, m: MeteredModel, cfg: SearchConfig, depth: int,
                 rng: RandomSource):
        self.m = m
        self.cfg = cfg
        self.depth = depth
        self.tree_rng, self.model_rng = rng.spawn(2)
        self.tree_size = 1

    def explore(self, node: PBNode, state: State, levels: int) -> list[Outcome]:
        """Expands a binary subtree of the given number of node levels.

        Returns the outcomes of all trajectories below the node.
        """
        m = self.m
        if m.is_terminal(state):
            return [m.outcome(state)]
        if levels <= 1:
            return [rollout(m, state, self.cfg.rollout_length, self.model_rng)]
        if not node.is_open:
            node.open(m.actions(state))
        if len(node.actions) == 1:
            pair = node.actions
        else:
            pair = rucb_select_pair(node.duels, node.actions, self.cfg.c,
                                    self.tree_rng)

        branches = []
        for action in pair:
            child_state = m.step(state, action, self.model_rng)
            child = node.children.get(action)
            if child is None:
                child = node.children[action] = PBNode()
                self.tree_size += 1
            child.state = child_state
            branches.append(self.explore(child, child_state, levels - 1))

        if len(branches) == 2:
            first, second = pair
            for a_outcome in branches[0]:
                for b_outcome in branches[1]:
                    node.duels.record(first, second,
                                      compare_outcomes(a_outcome, b_outcome))
        return [o for branch in branches for o in branch]


def run_search_pb(m: MeteredModel, root: State, cfg: SearchConfig,
                  depth: Optional[int] = None, max_depth: int = 4,
                  rng: Optional[RandomSource] = None) -> PBSearchResult:
    """Runs preference-based MCTS until the forward-model budget runs out.

    Args:
        m: The metered model; its remaining budget bounds the search.
        root: A nonterminal state to decide in.
        cfg: Search settings; the estimator and recommendation rule are
            not used.
        depth: Node levels of each iteration's subtree. Defaults to
            default_depth(cfg.budget, cfg.rollout_length, max_depth).
        max_depth: Cap on the default depth.
        rng: The search's random stream, RandomSource(cfg.seed) if None.

    Returns:
        The root action with the best average duel win rate, and the
        search statistics.

    Raises:
        IllegalAction: If root is terminal.
    """
    if m.is_terminal(root):
        raise IllegalAction("Cannot search from a terminal state")
    if depth is None:
        depth = default_depth(cfg.budget, cfg.rollout_length, max_depth)
    if depth < 2:
        raise ValueError(f"Subtree depth must be at least 2: {depth}")
    rng = rng if rng is not None else RandomSource(cfg.seed)
    search = _SubtreeSearch(m, cfg, depth, rng)
    tree = PBNode(root)
    tree.open(m.actions(root))
    calls_before = m.calls_used
    iterations, trace, trajectories = 0, [], []

    while len(tree.actions) > 1 and m.remaining > 0:
        duels_before = tree.duels.total
        try:
            outcomes = search.explore(tree, root, depth)
        except BudgetExhausted:
            break
        iterations += 1
        trajectories.append(len(outcomes))
        if tree.duels.total > duels_before:
            trace.append(tuple(tree.children))

    rates = tree.duels.win_rates()
    if len(tree.actions) == 1:
        action = tree.actions[0]
    elif rates:
        best = max(rates.values())
        action = search.tree_rng.choice(
            [a for a, rate in rates.items() if rate == best])
    else:
        action = search.tree_rng.choice(tree.actions)

    played = tree.duels.comparisons.sum(axis=1)
    stats = {a: ActionStats(int(round(played[i])), rates.get(a, math.nan))
             for i, a in enumerate(tree.actions)}
    calls_used = m.calls_used - calls_before
    logging.debug("Preference search chose '%s' after %d iterations and "
                  "%d calls.", action, iterations, calls_used)
    return PBSearchResult(action, stats, iterations, calls_used,
                          search.tree_size, trace, tree, trajectories)
