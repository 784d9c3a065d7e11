import pytest

from mdp_core import EnvironmentModel, GameStatus, Outcome


class EndlessCorridor(EnvironmentModel):
    """Walk left or right forever; the game never ends."""
    name = "corridor"

    def __init__(self, actions=("left", "right")):
        self._actions = tuple(actions)

    @property
    def score_bounds(self):
        return (0.0, 1.0)

    def initial_state(self):
        return 0

    def actions(self, state):
        return self._actions

    def transition(self, state, action, rng):
        return state + (1 if action == "right" else -1)

    def is_terminal(self, state):
        return False

    def outcome(self, state):
        return Outcome(GameStatus.PLAYING, 0.5)


class CallCounter(EnvironmentModel):
    """Passes everything to an environment, counting its transitions."""

    def __init__(self, inner):
        self.inner = inner
        self.name = inner.name
        self.transitions = 0

    @property
    def score_bounds(self):
        return self.inner.score_bounds

    def initial_state(self):
        return self.inner.initial_state()

    def actions(self, state):
        return self.inner.actions(state)

    def transition(self, state, action, rng):
        self.transitions += 1
        return self.inner.transition(state, action, rng)

    def is_terminal(self, state):
        return self.inner.is_terminal(state)

    def outcome(self, state):
        return self.inner.outcome(state)


@pytest.fixture
def corridor():
    return EndlessCorridor()


@pytest.fixture
def counted():
    return CallCounter


@pytest.fixture
def make_corridor():
    return EndlessCorridor
