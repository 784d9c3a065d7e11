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

"""Small stochastic games and the mapping of outcomes into [0, 1].

Each game is an EnvironmentModel with integer-valued or bounded scores
and a turn cap, so every episode ends. Games are built from a short
text config, "name key=value ...", through make_game().

  gapworld   Walk or jump along a strip with deadly gaps to reach the end.
  twoarm     One decision between a safe arm and a risky arm.
  chase      Catch fleeing animals before an angry one catches you.
  surround   Score by moving without hitting a trail, or quit to win.
"""
import logging
from dataclasses import dataclass, replace
from typing import Any, Callable, Optional

from config_handler import ConfigError
from mdp_core import (ActionId, EnvironmentModel, GameStatus, Outcome,
                      RandomSource, State)

STATUS_OFFSETS = {
    GameStatus.LOST: 0.0,
    GameStatus.PLAYING: 1 / 3,
    GameStatus.WON: 2 / 3
}

Cell = tuple[int, int]
MOVES = {
    "up": (0, -1),
    "down": (0, 1),
    "left": (-1, 0),
    "right": (1, 0)
}


class ScoreOutOfBounds(ValueError):
    """Raised when a score lies outside a game's declared bounds."""


class DegenerateBounds(ValueError):
    """Raised when r_min is greater than r_max."""


def reward_map(o: Outcome, r_min: float, r_max: float) -> float:
    """Maps an outcome into [0, 1], keeping won above playing above lost.

    The normalised score fills a third of the interval and the status
    picks which third.

    Args:
        o: The outcome to map.
        r_min: The lowest possible score of the game.
        r_max: The highest possible score of the game.

    Returns:
        r_norm / 3 plus 0, 1/3 or 2/3 for a lost, running or won game.
        With r_min equal to r_max, r_norm is taken as 0.

    Raises:
        DegenerateBounds: If r_min > r_max.
        ScoreOutOfBounds: If the score lies outside [r_min, r_max].

    Examples:
        >>> reward_map(Outcome(GameStatus.WON, 10), 0, 10)
        1.0
        >>> reward_map(Outcome(GameStatus.PLAYING, 5), 0, 10)
        0.5
    """
    if r_min > r_max:
        raise DegenerateBounds(f"Score bounds are inverted: {r_min} > {r_max}")
    if not r_min <= o.score <= r_max:
        raise ScoreOutOfBounds(
            f"Score {o.score} lies outside [{r_min}, {r_max}]")
    if r_min == r_max:
        r_norm = 0.0
    else:
        r_norm = (o.score - r_min) / (r_max - r_min)
    return r_norm / 3 + STATUS_OFFSETS[o.status]


def _parse_cells(text: str) -> frozenset[int]:
    if not text:
        return frozenset()
    return frozenset(int(cell) for cell in text.split(","))


@dataclass(frozen=True)
class GapState:
    position: int
    rightmost: int
    turn: int
    status: GameStatus


class GapWorld(EnvironmentModel):
    """A strip of cells 0..L with deadly single-cell gaps.

    The agent can step right, jump or stand still. Stepping into a gap
    loses the game. Jumping in front of a gap clears it with
    probability p and loses otherwise; jumping anywhere else is a safe
    single step. Reaching cell L wins, running out of turns loses. The
    score is the rightmost cell reached.
    """
    name = "gapworld"
    ACTIONS = ("right", "jump", "stay")
    PARAMETERS = {"length": int, "gaps": _parse_cells, "p": float,
                  "turns": int}

    def __init__(self, length: int = 12, gaps: frozenset[int] = frozenset({4, 9}),
                 p: float = 0.8, turns: int = 30):
        gaps = frozenset(gaps)
        if length < 2:
            raise ConfigError(f"GapWorld length must be at least 2: {length}")
        if any(not 0 < gap < length for gap in gaps):
            raise ConfigError("GapWorld gaps must lie strictly inside the strip")
        if any(gap + 1 in gaps for gap in gaps):
            raise ConfigError("GapWorld gaps must not be adjacent")
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"GapWorld p must lie in [0, 1]: {p}")
        if turns < 1:
            raise ConfigError(f"GapWorld turns must be positive: {turns}")
        self.length = length
        self.gaps = gaps
        self.p = p
        self.turns = turns

    @property
    def score_bounds(self) -> tuple[float, float]:
        return 0, self.length

    def initial_state(self) -> GapState:
        return GapState(0, 0, 0, GameStatus.PLAYING)

    def actions(self, state: GapState) -> tuple[ActionId, ...]:
        return () if self.is_terminal(state) else self.ACTIONS

    def is_terminal(self, state: GapState) -> bool:
        return state.status != GameStatus.PLAYING

    def outcome(self, state: GapState) -> Outcome:
        return Outcome(state.status, state.rightmost)

    def transition(self, state: GapState, action: ActionId,
                   rng: RandomSource) -> GapState:
        position = state.position
        facing_gap = position + 1 in self.gaps
        turn = state.turn + 1
        if action == "right":
            if facing_gap:
                return replace(state, turn=turn, status=GameStatus.LOST)
            position += 1
        elif action == "jump":
            if facing_gap:
                if rng.uniform() >= self.p:
                    return replace(state, turn=turn, status=GameStatus.LOST)
                position += 2
            else:
                position += 1

        position = min(position, self.length)
        rightmost = max(state.rightmost, position)
        if position == self.length:
            status = GameStatus.WON
        elif turn >= self.turns:
            status = GameStatus.LOST
        else:
            status = GameStatus.PLAYING
        return GapState(position, rightmost, turn, status)


@dataclass(frozen=True)
class ArmState:
    done: bool
    score: float


class TwoArmDilemma(EnvironmentModel):
    """A one-step game with a safe arm and a risky arm.

    The circle arm always scores r_c. The star arm scores r_hi with
    probability q and r_lo otherwise. The star beats the circle with
    probability q but has the lower mean. Every game ends won.
    """
    name = "twoarm"
    ACTIONS = ("circle", "star")
    PARAMETERS = {"r_c": float, "r_hi": float, "r_lo": float, "q": float}

    def __init__(self, r_c: float = 0.5, r_hi: float = 0.6,
                 r_lo: float = 0.1, q: float = 0.7):
        if not 0.0 < q < 1.0:
            raise ConfigError(f"TwoArmDilemma q must lie in (0, 1): {q}")
        if not r_hi > r_c > r_lo:
            raise ConfigError("TwoArmDilemma needs r_hi > r_c > r_lo")
        if not q * r_hi + (1 - q) * r_lo < r_c:
            raise ConfigError("TwoArmDilemma star arm must have the lower mean")
        self.r_c = r_c
        self.r_hi = r_hi
        self.r_lo = r_lo
        self.q = q

    @property
    def score_bounds(self) -> tuple[float, float]:
        return min(0.0, self.r_lo), max(1.0, self.r_hi)

    def initial_state(self) -> ArmState:
        return ArmState(False, 0.0)

    def actions(self, state: ArmState) -> tuple[ActionId, ...]:
        return () if state.done else self.ACTIONS

    def is_terminal(self, state: ArmState) -> bool:
        return state.done

    def outcome(self, state: ArmState) -> Outcome:
        status = GameStatus.WON if state.done else GameStatus.PLAYING
        return Outcome(status, state.score)

    def transition(self, state: ArmState, action: ActionId,
                   rng: RandomSource) -> ArmState:
        if action == "circle":
            return ArmState(True, self.r_c)
        score = self.r_hi if rng.uniform() < self.q else self.r_lo
        return ArmState(True, score)


def _neighbours(cell: Cell, width: int, height: int) -> list[Cell]:
    x, y = cell
    cells = [(x + dx, y + dy) for dx, dy in MOVES.values()]
    return [(cx, cy) for cx, cy in cells if 0 <= cx < width and 0 <= cy < height]


def _distance(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass(frozen=True)
class ChaseState:
    agent: Cell
    fleeing: tuple[Cell, ...]
    chaser: Optional[Cell]
    caught: tuple[Cell, ...]
    turn: int
    status: GameStatus


class ChaseLite(EnvironmentModel):
    """Catch every fleeing animal on a small grid.

    Walking onto a fleeing animal catches it. Animals mostly step away
    from the agent. The first animal to come next to a caught one turns
    angry and chases the agent from then on; contact with it loses the
    game. The game is won once no animal is fleeing and lost at the turn
    cap. The score is the number of animals caught.
    """
    name = "chase"
    ACTIONS = ("up", "down", "left", "right", "stay")
    PARAMETERS = {"width": int, "height": int, "targets": int,
                  "turns": int, "flee": float, "pursue": float}

    def __init__(self, width: int = 7, height: int = 7, targets: int = 3,
                 turns: int = 60, flee: float = 0.8, pursue: float = 0.9):
        if width < 3 or height < 3:
            raise ConfigError("ChaseLite grid must be at least 3x3")
        corners = [(0, 0), (width - 1, 0), (0, height - 1),
                   (width - 1, height - 1)]
        if not 1 <= targets <= len(corners):
            raise ConfigError(f"ChaseLite supports 1 to 4 targets: {targets}")
        if turns < 1:
            raise ConfigError(f"ChaseLite turns must be positive: {turns}")
        if not (0.0 <= flee <= 1.0 and 0.0 <= pursue <= 1.0):
            raise ConfigError("ChaseLite flee and pursue must lie in [0, 1]")
        self.width = width
        self.height = height
        self.targets = targets
        self.turns = turns
        self.flee = flee
        self.pursue = pursue
        self.start = (width // 2, height // 2)
        self.dens = tuple(corners[:targets])

    @property
    def score_bounds(self) -> tuple[float, float]:
        return 0, self.targets

    def initial_state(self) -> ChaseState:
        return ChaseState(self.start, self.dens, None, (), 0,
                          GameStatus.PLAYING)

    def actions(self, state: ChaseState) -> tuple[ActionId, ...]:
        return () if self.is_terminal(state) else self.ACTIONS

    def is_terminal(self, state: ChaseState) -> bool:
        return state.status != GameStatus.PLAYING

    def outcome(self, state: ChaseState) -> Outcome:
        return Outcome(state.status, len(state.caught))

    def _move_agent(self, cell: Cell, action: ActionId) -> Cell:
        if action == "stay":
            return cell
        dx, dy = MOVES[action]
        x = min(max(cell[0] + dx, 0), self.width - 1)
        y = min(max(cell[1] + dy, 0), self.height - 1)
        return x, y

    def _step_animal(self, cell: Cell, blocked: set[Cell], agent: Cell,
                     towards: bool, keen: float, rng: RandomSource) -> Cell:
        options = [cell] + [n for n in _neighbours(cell, self.width, self.height)
                            if n not in blocked]
        if not towards:
            options = [n for n in options if n != agent]
        if rng.uniform() < keen:
            sign = 1 if towards else -1
            best = min(sign * _distance(n, agent) for n in options)
            options = [n for n in options if sign * _distance(n, agent) == best]
        return rng.choice(options)

    def transition(self, state: ChaseState, action: ActionId,
                   rng: RandomSource) -> ChaseState:
        agent = self._move_agent(state.agent, action)
        fleeing = list(state.fleeing)
        caught = list(state.caught)
        chaser = state.chaser
        turn = state.turn + 1

        def finish(status: GameStatus) -> ChaseState:
            if status == GameStatus.PLAYING and turn >= self.turns:
                status = GameStatus.LOST
            return ChaseState(agent, tuple(fleeing), chaser, tuple(caught),
                              turn, status)

        if agent == chaser:
            return finish(GameStatus.LOST)
        if agent in fleeing:
            fleeing.remove(agent)
            caught.append(agent)
        if not fleeing:
            return finish(GameStatus.WON)

        angry = chaser is None
        for index, cell in enumerate(fleeing):
            blocked = set(fleeing) | set(caught) | ({chaser} - {None})
            blocked.discard(cell)
            fleeing[index] = self._step_animal(
                cell, blocked, agent, False, self.flee, rng)
        if angry and caught:
            for cell in fleeing:
                if any(_distance(cell, body) <= 1 for body in caught):
                    chaser = cell
                    fleeing.remove(cell)
                    break
        elif chaser is not None:
            blocked = set(fleeing) | set(caught)
            chaser = self._step_animal(
                chaser, blocked, agent, True, self.pursue, rng)
            if chaser == agent:
                return finish(GameStatus.LOST)

        if not fleeing:
            return finish(GameStatus.WON)
        return finish(GameStatus.PLAYING)


@dataclass(frozen=True)
class SurroundState:
    agent: Cell
    enemy: Cell
    trail: frozenset[Cell]
    moves: int
    turn: int
    status: GameStatus


class SurroundLite(EnvironmentModel):
    """Move without hitting a trail, or quit to win at once.

    Both the agent and a randomly moving enemy leave a trail behind
    them. Running into a trail, the enemy or the edge loses. The quit
    action wins immediately, and so does surviving to the turn cap. The
    score is the number of moves made while alive.
    """
    name = "surround"
    ACTIONS = ("up", "down", "left", "right", "quit")
    PARAMETERS = {"width": int, "height": int, "turns": int}

    def __init__(self, width: int = 7, height: int = 7, turns: int = 50):
        if width < 4 or height < 1:
            raise ConfigError("SurroundLite grid must be at least 4 wide")
        if turns < 1:
            raise ConfigError(f"SurroundLite turns must be positive: {turns}")
        self.width = width
        self.height = height
        self.turns = turns

    @property
    def score_bounds(self) -> tuple[float, float]:
        return 0, self.turns

    def initial_state(self) -> SurroundState:
        row = self.height // 2
        return SurroundState((1, row), (self.width - 2, row), frozenset(),
                             0, 0, GameStatus.PLAYING)

    def actions(self, state: SurroundState) -> tuple[ActionId, ...]:
        return () if self.is_terminal(state) else self.ACTIONS

    def is_terminal(self, state: SurroundState) -> bool:
        return state.status != GameStatus.PLAYING

    def outcome(self, state: SurroundState) -> Outcome:
        return Outcome(state.status, state.moves)

    def transition(self, state: SurroundState, action: ActionId,
                   rng: RandomSource) -> SurroundState:
        turn = state.turn + 1
        if action == "quit":
            return replace(state, turn=turn, status=GameStatus.WON)

        dx, dy = MOVES[action]
        agent = (state.agent[0] + dx, state.agent[1] + dy)
        inside = 0 <= agent[0] < self.width and 0 <= agent[1] < self.height
        if not inside or agent in state.trail or agent == state.enemy:
            return replace(state, turn=turn, status=GameStatus.LOST)

        trail = state.trail | {state.agent}
        options = [cell for cell in _neighbours(state.enemy, self.width,
                                                self.height)
                   if cell not in trail and cell != agent]
        enemy = state.enemy
        if options:
            trail = trail | {enemy}
            enemy = rng.choice(options)

        status = GameStatus.WON if turn >= self.turns else GameStatus.PLAYING
        return SurroundState(agent, enemy, trail, state.moves + 1, turn,
                             status)


class TransformedScores(EnvironmentModel):
    """Passes a game through a strictly increasing map of its scores.

    Play is unchanged; only the scores reported in outcomes and score
    bounds are transformed.
    """

    def __init__(self, inner: EnvironmentModel,
                 transform: Callable[[float], float]):
        self.inner = inner
        self.transform = transform
        self.name = inner.name

    @property
    def score_bounds(self) -> tuple[float, float]:
        low, high = self.inner.score_bounds
        return self.transform(low), self.transform(high)

    def initial_state(self) -> State:
        return self.inner.initial_state()

    def actions(self, state: State) -> tuple[ActionId, ...]:
        return self.inner.actions(state)

    def is_terminal(self, state: State) -> bool:
        return self.inner.is_terminal(state)

    def outcome(self, state: State) -> Outcome:
        o = self.inner.outcome(state)
        return Outcome(o.status, self.transform(o.score))

    def transition(self, state: State, action: ActionId,
                   rng: RandomSource) -> State:
        return self.inner.transition(state, action, rng)


GAMES = {
    GapWorld.name: GapWorld,
    TwoArmDilemma.name: TwoArmDilemma,
    ChaseLite.name: ChaseLite,
    SurroundLite.name: SurroundLite
}


def parse_game_config(text: str) -> tuple[str, dict[str, str]]:
    """Splits a game config such as "gapworld p=0.9 gaps=3,7".

    Returns:
        The game name and its parameters as raw strings.

    Raises:
        ConfigError: If the text is empty or a parameter is not key=value.
    """
    words = text.split()
    if not words:
        raise ConfigError("A game config needs a game name")
    name, *pairs = words
    parameters = {}
    for pair in pairs:
        key, separator, value = pair.partition("=")
        if not separator or not key:
            raise ConfigError(f"Game parameter '{pair}' should be key=value")
        parameters[key] = value
    return name.lower(), parameters


def make_game(text: str) -> EnvironmentModel:
    """Builds a game from its text config.

    Raises:
        ConfigError: For an unknown game, an unknown parameter or a
        parameter value the game rejects.
    """
    name, raw = parse_game_config(text)
    if name not in GAMES:
        raise ConfigError(f"Unknown game '{name}'")
    game = GAMES[name]
    parameters: dict[str, Any] = {}
    for key, value in raw.items():
        if key not in game.PARAMETERS:
            raise ConfigError(f"Game '{name}' has no parameter '{key}'")
        try:
            parameters[key] = game.PARAMETERS[key](value)
        except ValueError as error:
            raise ConfigError(f"Bad value for '{key}': {value}") from error
    logging.debug("Building game '%s' with %s", name, parameters)
    return game(**parameters)
