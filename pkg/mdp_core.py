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

"""Environment contract, ordinal outcomes and forward-model metering.

Defines the game status and outcome types with their lexicographic
order, the abstract stochastic environment every game implements, the
seeded random streams used by searches and episodes, and the metered
wrapper that counts (and limits) calls to an environment's forward
model.
"""
import abc
import enum
import math
from dataclasses import dataclass
from typing import Any, Hashable, Optional, Sequence, Union

import numpy as np

ActionId = Hashable
State = Any

SEED_LIMIT = 2**64


class ForwardModelError(Exception):
    """Base class for errors raised while using a forward model."""


class BudgetExhausted(ForwardModelError):
    """Raised when a metered model has no forward-model calls left.

    Attributes:
        outcome: The Outcome of the last state reached before the budget
            ran out, when the caller had one to report, otherwise None.
    """

    def __init__(self, message: str = "Forward-model budget exhausted",
                 outcome: Optional["Outcome"] = None):
        super().__init__(message)
        self.outcome = outcome


class IllegalAction(ForwardModelError, ValueError):
    """Raised when an action is not available in a state."""


class NonFiniteScore(ValueError):
    """Raised when an outcome is built with a NaN or infinite score."""


class GameStatus(enum.IntEnum):
    """Status of a game, ordered Lost < Playing < Won."""
    LOST = 0
    PLAYING = 1
    WON = 2


class Ordering(enum.IntEnum):
    """Result of comparing two outcomes."""
    LESS = -1
    EQUAL = 0
    GREATER = 1


@dataclass(frozen=True, order=True)
class Outcome:
    """The ordinal reward of a state: its status, then its score.

    Field order makes the generated comparisons lexicographic, so a won
    game beats any running or lost game whatever the scores.

    Example:
        >>> Outcome(GameStatus.WON, 0) > Outcome(GameStatus.PLAYING, 100)
        True
    """
    status: GameStatus
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise NonFiniteScore(f"Outcome score must be finite: {self.score}")
        object.__setattr__(self, "status", GameStatus(self.status))


def compare_outcomes(a: Outcome, b: Outcome) -> Ordering:
    """Compares two outcomes lexicographically by status then score.

    Args:
        a: The first outcome.
        b: The second outcome.

    Returns:
        Ordering.GREATER if a is better than b, Ordering.LESS if it is
        worse, Ordering.EQUAL if both status and score are equal.
    """
    if a < b:
        return Ordering.LESS
    if a > b:
        return Ordering.GREATER
    return Ordering.EQUAL


def derive_seed(master: int, *key: int) -> int:
    """Derives a 64-bit child seed from a master seed and a key path.

    The derivation depends only on its arguments, so an episode or a
    sweep cell gets the same seed whatever order it is run in.

    Args:
        master: The master seed.
        *key: Non-negative integers identifying the child.

    Returns:
        A seed in [0, 2**64).
    """
    sequence = np.random.SeedSequence(master, spawn_key=tuple(key))
    low, high = sequence.generate_state(2, dtype=np.uint32)
    return int(high) << 32 | int(low)


class RandomSource:
    """A seeded random stream built on numpy's PCG64 generator.

    Streams are split hierarchically with spawn(), so independent
    consumers (the search tree, the forward model) draw from independent
    but reproducible streams.
    """

    def __init__(self, seed: Union[int, np.random.SeedSequence] = 0):
        if isinstance(seed, np.random.SeedSequence):
            self.seed_sequence = seed
        else:
            if not 0 <= seed < SEED_LIMIT:
                raise ValueError(f"Seed must be a 64-bit unsigned int: {seed}")
            self.seed_sequence = np.random.SeedSequence(seed)
        self.generator = np.random.Generator(np.random.PCG64(self.seed_sequence))

    def spawn(self, count: int) -> list["RandomSource"]:
        """Returns count independent child streams."""
        return [RandomSource(child) for child in self.seed_sequence.spawn(count)]

    def copy(self) -> "RandomSource":
        """Returns a stream that will replay this stream's future draws."""
        duplicate = RandomSource(self.seed_sequence)
        duplicate.generator.bit_generator.state = \
            self.generator.bit_generator.state
        return duplicate

    def uniform(self) -> float:
        """Draws a float in [0, 1)."""
        return float(self.generator.random())

    def integer(self, high: int) -> int:
        """Draws an int in [0, high)."""
        return int(self.generator.integers(high))

    def choice(self, items: Sequence[Any]) -> Any:
        """Draws one item uniformly from a nonempty sequence."""
        return items[self.integer(len(items))]

    def permutation(self, items: Sequence[Any]) -> list[Any]:
        """Returns the items in a uniformly random order."""
        order = self.generator.permutation(len(items))
        return [items[index] for index in order]


class EnvironmentModel(abc.ABC):
    """A stochastic forward-model environment.

    Subclasses implement the transition on states that are already
    known to be nonterminal and to allow the action; step() performs
    those checks. A terminal state's outcome is Lost or Won, a
    nonterminal state's outcome is Playing.
    """
    name = "environment"

    @abc.abstractmethod
    def initial_state(self) -> State:
        """Returns the state a game starts in."""

    @abc.abstractmethod
    def actions(self, state: State) -> tuple[ActionId, ...]:
        """Returns the actions available in a state."""

    @abc.abstractmethod
    def transition(self, state: State, action: ActionId,
                   rng: RandomSource) -> State:
        """Samples a successor state. Must only draw from rng."""

    @abc.abstractmethod
    def is_terminal(self, state: State) -> bool:
        """Returns True when the game is over in a state."""

    @abc.abstractmethod
    def outcome(self, state: State) -> Outcome:
        """Returns the current outcome of a state."""

    @property
    @abc.abstractmethod
    def score_bounds(self) -> tuple[float, float]:
        """The lowest and highest possible score, (r_min, r_max)."""

    def step(self, state: State, action: ActionId,
             rng: RandomSource) -> State:
        """Checks an action is legal, then samples a successor state.

        Raises:
            IllegalAction: If the state is terminal or the action is not
            one of its available actions.
        """
        if self.is_terminal(state):
            raise IllegalAction("No action is legal in a terminal state")
        if action not in self.actions(state):
            raise IllegalAction(f"Action '{action}' is not available")
        return self.transition(state, action, rng)


class MeteredModel:
    """Wraps an environment and counts calls to its forward model.

    Every query other than step() is passed through for free. step()
    raises BudgetExhausted once calls_used reaches the budget, so
    calls_used can never exceed it.
    """

    def __init__(self, inner: EnvironmentModel, budget: int):
        if budget < 1:
            raise ValueError(f"Budget must be positive: {budget}")
        self.inner = inner
        self.budget = budget
        self.calls_used = 0

    @property
    def remaining(self) -> int:
        return self.budget - self.calls_used

    @property
    def score_bounds(self) -> tuple[float, float]:
        return self.inner.score_bounds

    def initial_state(self) -> State:
        return self.inner.initial_state()

    def actions(self, state: State) -> tuple[ActionId, ...]:
        return self.inner.actions(state)

    def is_terminal(self, state: State) -> bool:
        return self.inner.is_terminal(state)

    def outcome(self, state: State) -> Outcome:
        return self.inner.outcome(state)

    def step(self, state: State, action: ActionId,
             rng: RandomSource) -> State:
        """Samples a successor state, spending one forward-model call.

        Raises:
            IllegalAction: If the action is not legal in the state. No
            call is spent.
            BudgetExhausted: If the budget has been used up.
        """
        if self.inner.is_terminal(state) or \
                action not in self.inner.actions(state):
            raise IllegalAction(f"Action '{action}' is not available")
        if self.calls_used >= self.budget:
            raise BudgetExhausted()
        self.calls_used += 1
        return self.inner.transition(state, action, rng)


def metered_step(m: MeteredModel, s: State, a: ActionId,
                 rng: RandomSource) -> State:
    """Takes one metered step; see MeteredModel.step."""
    return m.step(s, a, rng)
