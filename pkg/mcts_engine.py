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

"""Monte Carlo tree search with interchangeable value estimators.

Every iteration selects a path through the tree with the UCT rule,
expands one untried action, plays a random rollout of at most
rollout_length steps and backs the outcome of the state it stopped in up
the path. The value an action gets in the UCT rule comes from one of
four estimators:

  average          the mean mapped reward (vanilla MCTS)
  mixmax           a blend of the best and the mean mapped reward
  node-normalized  the mean rescaled by the rewards seen at the node
  borda            the Borda score of the action's outcome counts

The tree is open-loop: nodes stand for action sequences and each pass
re-samples the forward model, so stochastic transitions are drawn anew
every iteration. Searching stops when the forward-model budget runs out.
"""
import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional

from games import reward_map
from mdp_core import (SEED_LIMIT, ActionId, BudgetExhausted, IllegalAction,
                      MeteredModel, Outcome, RandomSource, State)
from ordinal_stats import NoSamples, OutcomeTable


class EstimatorKind(enum.Enum):
    AVERAGE = "average"
    MIXMAX = "mixmax"
    NODE_NORMALIZED = "node-normalized"
    BORDA = "borda"


@dataclass(frozen=True)
class Estimator:
    """A value estimator; q is the MixMax weight of the maximum."""
    kind: EstimatorKind = EstimatorKind.AVERAGE
    q: float = 0.25

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"MixMax q must lie in [0, 1]: {self.q}")


class Recommendation(enum.Enum):
    MAX_VISITS = "max-visits"
    MAX_VALUE = "max-value"


@dataclass(frozen=True)
class SearchConfig:
    """Settings of one search.

    Attributes:
        estimator: How action values are estimated.
        c: The exploration trade-off of the UCT rule.
        rollout_length: The most random steps a rollout may take.
        budget: Forward-model calls per decision.
        seed: Seed of the search's random streams.
        recommendation: How the final root action is chosen.
    """
    estimator: Estimator = Estimator()
    c: float = 1 / math.sqrt(2)
    rollout_length: int = 10
    budget: int = 1000
    seed: int = 0
    recommendation: Recommendation = Recommendation.MAX_VISITS

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c >= 0):
            raise ValueError(f"Exploration constant must be >= 0: {self.c}")
        if self.rollout_length < 1:
            raise ValueError(
                f"Rollout length must be positive: {self.rollout_length}")
        if self.budget < 1:
            raise ValueError(f"Budget must be positive: {self.budget}")
        if not 0 <= self.seed < SEED_LIMIT:
            raise ValueError(f"Seed must be a 64-bit unsigned int: {self.seed}")


@dataclass(frozen=True)
class ActionStats:
    visits: int
    value: float


@dataclass
class SearchResult:
    """What a search recommends and what it cost.

    Attributes:
        action: The recommended root action.
        stats: Visits and value estimate of every root action; the
            value is NaN for an action that could not be estimated.
        iterations: Completed iterations.
        calls_used: Forward-model calls spent.
        tree_size: Nodes in the tree, root included.
        trace: The action path of every completed iteration.
        root: The root of the search tree.
    """
    action: ActionId
    stats: dict[ActionId, ActionStats]
    iterations: int
    calls_used: int
    tree_size: int = 1
    trace: list[tuple[ActionId, ...]] = field(default_factory=list)
    root: Any = field(default=None, repr=False, compare=False)


class TreeNode:
    """A node of the search tree.

    A node's actions are fixed the first time it is reached in a
    nonterminal state (open()). Visits are counted per action, so the
    node's own visit count n_v is their sum.
    """

    def __init__(self, state: State = None):
        self.state = state
        self.actions: tuple[ActionId, ...] = ()
        self.untried: list[ActionId] = []
        self.children: dict[ActionId, "TreeNode"] = {}
        self.visits: dict[ActionId, int] = {}
        self.reward_sum: dict[ActionId, float] = {}
        self.reward_max: dict[ActionId, float] = {}
        self.reward_low = math.inf
        self.reward_high = -math.inf
        self.table: Optional[OutcomeTable] = None
        self.is_open = False

    @property
    def total_visits(self) -> int:
        return sum(self.visits.values())

    def open(self, actions: tuple[ActionId, ...], estimator: Estimator,
             rng: RandomSource):
        """Sets up per-action statistics and a random expansion order."""
        self.actions = tuple(actions)
        self.untried = rng.permutation(self.actions)
        self.visits = dict.fromkeys(self.actions, 0)
        self.reward_sum = dict.fromkeys(self.actions, 0.0)
        self.reward_max = dict.fromkeys(self.actions, -math.inf)
        if estimator.kind is EstimatorKind.BORDA:
            self.table = OutcomeTable(self.actions)
        self.is_open = True

    def update(self, action: ActionId, o: Outcome,
               reward: Optional[float] = None):
        """Records one backed-up result for an action.

        The outcome goes into the outcome table (Borda nodes only); the
        mapped reward, when given, into the numeric statistics.
        """
        self.visits[action] += 1
        if self.table is not None:
            self.table.record_outcome(action, o)
        if reward is not None:
            self.reward_sum[action] += reward
            self.reward_max[action] = max(self.reward_max[action], reward)
            self.reward_low = min(self.reward_low, reward)
            self.reward_high = max(self.reward_high, reward)


def node_value(node: TreeNode, a: ActionId, estimator: Estimator) -> float:
    """Estimates the value of an action at a node.

    Args:
        node: The node holding the action's statistics.
        a: The action.
        estimator: Which estimate to compute.

    Returns:
        The mean reward, the MixMax blend q*max + (1-q)*mean, the mean
        rescaled to the node's reward range (0.5 when that range is a
        single value) or the Borda score.

    Raises:
        NoSamples: If the action has not been visited.
    """
    visits = node.visits.get(a, 0)
    if visits == 0:
        raise NoSamples(f"Action '{a}' has not been visited")
    kind = estimator.kind
    if kind is EstimatorKind.BORDA:
        return node.table.borda_score(a)
    mean = node.reward_sum[a] / visits
    if kind is EstimatorKind.MIXMAX:
        return estimator.q * node.reward_max[a] + (1 - estimator.q) * mean
    if kind is EstimatorKind.NODE_NORMALIZED:
        if node.reward_high == node.reward_low:
            return 0.5
        return (mean - node.reward_low) / (node.reward_high - node.reward_low)
    return mean


def exploration_bonus(total: int, visits: int, c: float) -> float:
    """The UCT exploration term 2c * sqrt(2 ln n_v / n_v(a))."""
    return 2 * c * math.sqrt(2 * math.log(total) / visits)


def select_child(node: TreeNode, C: float, estimator: Estimator,
                 rng: RandomSource) -> ActionId:
    """Picks the action with the highest UCT value at a node.

    Actions that were never tried come first, in the node's expansion
    order. Ties between UCT values are broken uniformly at random.

    Args:
        node: An open node.
        C: The exploration trade-off.
        estimator: The value estimator.
        rng: Stream for tie-breaking.

    Returns:
        The selected action.
    """
    if node.untried:
        return node.untried[0]
    total = node.total_visits
    scores = [node_value(node, a, estimator)
              + exploration_bonus(total, node.visits[a], C)
              for a in node.actions]
    best = max(scores)
    tied = [a for a, score in zip(node.actions, scores) if score == best]
    return tied[0] if len(tied) == 1 else rng.choice(tied)


def rollout(m: MeteredModel, s: State, RL: int,
            rng: RandomSource) -> Outcome:
    """Plays uniformly random actions from a state.

    Stops at a terminal state or after RL steps and returns the outcome
    of the state it stopped in.

    Raises:
        BudgetExhausted: If the budget runs out first. The exception
        carries the outcome of the last state reached.
    """
    steps = 0
    while steps < RL and not m.is_terminal(s):
        action = rng.choice(m.actions(s))
        try:
            s = m.step(s, action, rng)
        except BudgetExhausted as exhausted:
            raise BudgetExhausted(str(exhausted), outcome=m.outcome(s)) \
                from exhausted
        steps += 1
    return m.outcome(s)


def backpropagate(path: list[tuple[TreeNode, ActionId]], o: Outcome,
                  estimator: Estimator = Estimator(),
                  score_bounds: tuple[float, float] = (0, 1)):
    """Backs an outcome up every (node, action) pair of a path.

    Borda nodes record the outcome itself; the numeric estimators record
    its reward mapped into [0, 1] with the game's score bounds.
    """
    reward = None
    if estimator.kind is not EstimatorKind.BORDA:
        reward = reward_map(o, *score_bounds)
    for node, action in path:
        node.update(action, o, reward)


def _descend(m: MeteredModel, root: TreeNode, root_state: State,
             cfg: SearchConfig, tree_rng: RandomSource,
             model_rng: RandomSource):
    """Selection and expansion. Returns the path, the state reached and
    whether a node was added."""
    node, state, path = root, root_state, []
    while not m.is_terminal(state):
        legal = m.actions(state)
        if not node.is_open:
            node.open(legal, cfg.estimator, tree_rng)
        if node.untried:
            action = node.untried[0]
            if action not in legal:
                break
            state = m.step(state, action, model_rng)
            node.untried.pop(0)
            node.children[action] = TreeNode(state)
            path.append((node, action))
            return path, state, True
        action = select_child(node, cfg.c, cfg.estimator, tree_rng)
        if action not in legal:
            break
        state = m.step(state, action, model_rng)
        path.append((node, action))
        node = node.children[action]
        node.state = state
    return path, state, False


def _estimate(node: TreeNode, action: ActionId, estimator: Estimator) -> float:
    try:
        return node_value(node, action, estimator)
    except NoSamples:
        return math.nan


def _recommend(root: TreeNode, cfg: SearchConfig,
               rng: RandomSource) -> ActionId:
    def key(action: ActionId) -> tuple[float, ...]:
        value = _estimate(root, action, cfg.estimator)
        value = -math.inf if math.isnan(value) else value
        if cfg.recommendation is Recommendation.MAX_VALUE:
            return value, root.visits[action]
        return root.visits[action], value

    keys = {action: key(action) for action in root.actions}
    best = max(keys.values())
    tied = [action for action, k in keys.items() if k == best]
    return tied[0] if len(tied) == 1 else rng.choice(tied)


def run_search(m: MeteredModel, root_state: State, cfg: SearchConfig,
               rng: Optional[RandomSource] = None) -> SearchResult:
    """Searches from a state until the forward-model budget runs out.

    Args:
        m: The metered model; its remaining budget bounds the search.
        root_state: A nonterminal state to decide in.
        cfg: The search settings.
        rng: The search's random stream, RandomSource(cfg.seed) if None.

    Returns:
        The recommended action and the search statistics.

    Raises:
        IllegalAction: If root_state is terminal.
    """
    if m.is_terminal(root_state):
        raise IllegalAction("Cannot search from a terminal state")
    rng = rng if rng is not None else RandomSource(cfg.seed)
    tree_rng, model_rng = rng.spawn(2)
    root = TreeNode(root_state)
    root.open(m.actions(root_state), cfg.estimator, tree_rng)
    calls_before = m.calls_used
    iterations, tree_size, trace = 0, 1, []

    while len(root.actions) > 1 and m.remaining > 0:
        try:
            path, state, expanded = _descend(
                m, root, root_state, cfg, tree_rng, model_rng)
        except BudgetExhausted:
            break
        exhausted = False
        try:
            outcome = rollout(m, state, cfg.rollout_length, model_rng)
        except BudgetExhausted as error:
            outcome, exhausted = error.outcome, True
        if path:
            backpropagate(path, outcome, cfg.estimator, m.score_bounds)
            iterations += 1
            tree_size += expanded
            trace.append(tuple(action for _, action in path))
        if exhausted:
            break

    if len(root.actions) == 1:
        action = root.actions[0]
    else:
        action = _recommend(root, cfg, tree_rng)
    stats = {a: ActionStats(root.visits[a], _estimate(root, a, cfg.estimator))
             for a in root.actions}
    calls_used = m.calls_used - calls_before
    logging.debug("Search chose '%s' after %d iterations and %d calls.",
                  action, iterations, calls_used)
    return SearchResult(action, stats, iterations, calls_used, tree_size,
                        trace, root)
