import numpy as np
import pytest

from games import GAMES, TwoArmDilemma, make_game
from mcts_engine import SearchConfig
from mdp_core import IllegalAction, MeteredModel, Ordering, RandomSource
from pb_mcts import (DuelStats, TooFewActions, default_depth,
                     rucb_select_pair, run_search_pb)


def pb_search(env, budget, seed=0, depth=None, rollout_length=10):
    m = MeteredModel(env, budget)
    cfg = SearchConfig(budget=budget, seed=seed, rollout_length=rollout_length)
    return m, run_search_pb(m, env.initial_state(), cfg, depth=depth)


def test_duel_stats_count_every_comparison():
    duels = DuelStats(["a", "b", "c"])
    rng = np.random.default_rng(0)
    for _ in range(300):
        i, j = rng.choice(3, size=2, replace=False)
        result = Ordering(int(rng.integers(-1, 2)))
        duels.record(duels.actions[i], duels.actions[j], result)
    assert duels.total == 300
    comparisons = duels.comparisons
    assert np.allclose(comparisons, comparisons.T)
    assert comparisons.sum() == 600


def test_duel_stats_ties_count_half():
    duels = DuelStats(["a", "b"])
    duels.record("a", "b", Ordering.EQUAL)
    duels.record("a", "b", Ordering.GREATER)
    assert duels.win_rates() == {"a": 0.75, "b": 0.25}


def test_rucb_without_data_picks_at_random():
    duels = DuelStats(["a", "b"])
    pairs = {rucb_select_pair(duels, ["a", "b"], 0.5, RandomSource(seed))
             for seed in range(40)}
    assert pairs == {("a", "b"), ("b", "a")}


def test_rucb_champion_is_the_winner():
    duels = DuelStats(["a", "b"])
    for _ in range(10):
        duels.record("a", "b", Ordering.GREATER)
    assert rucb_select_pair(duels, ["a", "b"], 0.1, RandomSource(0),
                            t=1000) == ("a", "b")


def test_rucb_challenges_untested_action():
    duels = DuelStats(["a", "b", "c"])
    for _ in range(10):
        duels.record("a", "b", Ordering.GREATER)
    champion, challenger = rucb_select_pair(duels, ["a", "b", "c"], 0.1,
                                            RandomSource(0))
    assert "c" in (champion, challenger)
    assert challenger != champion


def test_rucb_needs_two_actions():
    with pytest.raises(TooFewActions):
        rucb_select_pair(DuelStats(["a"]), ["a"], 1.0, RandomSource(0))


def test_default_depth():
    assert default_depth(250, 10) == 4
    assert default_depth(40, 10) == 2
    assert default_depth(10, 10) == 2
    assert default_depth(10000, 5, max_depth=6) == 6


def test_one_iteration_builds_full_binary_subtree(corridor):
    # Six steps down the subtree and four rollouts of five steps.
    m, result = pb_search(corridor, 26, depth=3, rollout_length=5)
    assert m.calls_used == 26
    assert result.iterations == 1
    assert result.trajectories == [4]
    assert result.tree_size == 7
    assert result.root.duels.total == 4


def test_trajectories_per_iteration_are_capped(corridor):
    _, result = pb_search(corridor, 1000, depth=3, rollout_length=5)
    assert result.iterations > 1
    assert all(count == 4 for count in result.trajectories)


@pytest.mark.parametrize("name", list(GAMES))
@pytest.mark.parametrize("budget", [250, 500, 1000, 10000])
def test_pb_search_stays_within_budget(name, budget):
    m, result = pb_search(make_game(name), budget)
    assert m.calls_used <= budget
    assert result.action in make_game(name).ACTIONS


def test_pb_search_counts_every_transition(counted):
    env = counted(make_game("gapworld"))
    m, result = pb_search(env, 1000, seed=2)
    assert env.transitions == result.calls_used == m.calls_used


def test_pb_search_uses_whole_budget_when_nothing_ends(corridor):
    m, _ = pb_search(corridor, 1000)
    assert m.calls_used == 1000


def test_pb_search_single_action(make_corridor):
    m, result = pb_search(make_corridor(actions=("right",)), 100)
    assert result.action == "right"
    assert m.calls_used == 0


def test_pb_search_rejects_terminal_root():
    env = TwoArmDilemma()
    state = env.step(env.initial_state(), "star", RandomSource(0))
    with pytest.raises(IllegalAction):
        run_search_pb(MeteredModel(env, 10), state, SearchConfig())


def test_pb_search_prefers_the_arm_that_usually_wins():
    chosen = [pb_search(TwoArmDilemma(), 250, seed)[1].action
              for seed in range(100)]
    assert chosen.count("star") >= 90


def test_pb_search_is_deterministic():
    _, first = pb_search(make_game("gapworld"), 500, seed=4)
    _, second = pb_search(make_game("gapworld"), 500, seed=4)
    assert first.action == second.action
    assert first.trace == second.trace
    assert np.array_equal(first.root.duels.wins, second.root.duels.wins)
