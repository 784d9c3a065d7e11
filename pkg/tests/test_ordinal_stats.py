import math

import numpy as np
import pytest

from mdp_core import GameStatus, Outcome
from ordinal_stats import NoSamples, OutcomeTable, SameAction, UnknownAction

SAMPLES_A = (0.1, 1, 0.1)
SAMPLES_B = (0.3, 0.35, 0.25)


def won(score):
    return Outcome(GameStatus.WON, score)


def small_example():
    table = OutcomeTable(["a", "b"])
    for value in SAMPLES_A:
        table.record_outcome("a", won(value))
    for value in SAMPLES_B:
        table.record_outcome("b", won(value))
    return table


def random_table(rng, equal_pair=False):
    size = int(rng.integers(2, 6))
    ordinals = [Outcome(status, score) for status in GameStatus
                for score in range(3)][:int(rng.integers(1, 9))]
    actions = [f"a{i}" for i in range(size)]
    samples = {action: [ordinals[i] for i in rng.integers(
        len(ordinals), size=int(rng.integers(1, 7)))] for action in actions}
    if equal_pair:
        samples[actions[1]] = list(reversed(samples[actions[0]]))
    table = OutcomeTable(actions)
    pending = [(a, o) for a, values in samples.items() for o in values]
    for index in rng.permutation(len(pending)):
        table.record_outcome(*pending[index])
    return table, samples


def test_small_example_means_disagree_with_preference():
    table = small_example()
    assert math.isclose(np.mean(SAMPLES_A), 0.4, abs_tol=1e-12)
    assert math.isclose(np.mean(SAMPLES_B), 0.3, abs_tol=1e-12)
    assert abs(table.pref_prob("a", "b") - 1 / 3) < 1e-12
    assert abs(table.borda_score("a") - 1 / 3) < 1e-12
    assert abs(table.borda_score("b") - 2 / 3) < 1e-12


def test_small_example_matches_weighted_update():
    # P <- alpha P + (1 - alpha) (P(below o | b) + P(o | b) / 2) for a's samples
    table = OutcomeTable(["a", "b"])
    for value in SAMPLES_B:
        table.record_outcome("b", won(value))
    expected = 0.0
    for n, value in enumerate(SAMPLES_A):
        table.record_outcome("a", won(value))
        alpha = n / (n + 1)
        below = table.prob_below(won(value), "b")
        same = table.prob_of(won(value), "b")
        expected = alpha * expected + (1 - alpha) * (below + same / 2)
        assert abs(table.pref_prob("a", "b") - expected) < 1e-12


def test_counts_and_probabilities():
    table = small_example()
    assert table.total == 6
    assert table.visits("a") == 3
    assert table.count(won(0.1), "a") == 2
    assert table.count(won(0.2), "a") == 0
    assert table.count_below(won(0.3), "b") == 1
    assert table.prob_of(won(0.1), "a") == pytest.approx(2 / 3)
    assert table.prob_below(won(0.35), "b") == pytest.approx(2 / 3)
    assert table.ordinals == sorted(table.ordinals)
    assert table.counts()["a"] == {won(0.1): 2, won(1): 1}


def test_single_action_scores_one():
    table = OutcomeTable(["only"])
    table.record_outcome("only", Outcome(GameStatus.LOST, 0))
    assert table.borda_score("only") == 1.0


def test_errors():
    table = OutcomeTable(["a", "b"])
    with pytest.raises(NoSamples):
        table.pref_prob("a", "b")
    with pytest.raises(UnknownAction):
        table.record_outcome("c", won(0))
    table.record_outcome("a", won(0))
    with pytest.raises(SameAction):
        table.pref_prob("a", "a")
    with pytest.raises(NoSamples):
        table.borda_score("a")
    with pytest.raises(ValueError):
        OutcomeTable(["a", "a"])


def test_borda_properties_on_random_tables():
    rng = np.random.default_rng(2024)
    for trial in range(1000):
        table, samples = random_table(rng, equal_pair=trial % 4 == 0)
        actions = table.actions
        scores = table.borda_scores()
        for a in actions:
            others = [b for b in actions if b != a]
            dominates = all(min(samples[a]) > max(samples[b]) for b in others)
            dominated = all(max(samples[a]) < min(samples[b]) for b in others)
            assert (scores[a] == 1.0) == dominates
            assert (scores[a] == 0.0) == dominated
        for a in actions:
            for b in actions:
                if a != b and sorted(samples[a]) == sorted(samples[b]):
                    assert scores[a] == scores[b]
        total = sum(table.pref_prob(a, b) for a in actions
                    for b in actions if a != b)
        size = len(actions)
        assert abs(total - size * (size - 1) / 2) < 1e-9


def test_incremental_matches_batch():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        table, _ = random_table(rng)
        assert np.allclose(table.preference_matrix(),
                           table.batch_preference_matrix(),
                           rtol=0, atol=1e-9, equal_nan=True)


RAW_SCORES = (-1.5, 0.2, 7.0)


def rebuilt(samples, transform):
    table = OutcomeTable(list(samples))
    for action, outcomes in samples.items():
        for o in outcomes:
            table.record_outcome(
                action, Outcome(o.status, transform(RAW_SCORES[o.score])))
    return table


@pytest.mark.parametrize("transform", [
    lambda x: x ** 3, math.exp, RAW_SCORES.index
], ids=["cube", "exp", "rank"])
def test_increasing_transforms_keep_preferences(transform):
    rng = np.random.default_rng(31)
    for _ in range(300):
        _, samples = random_table(rng)
        raw = rebuilt(samples, lambda x: x)
        moved = rebuilt(samples, transform)
        assert np.array_equal(raw.preference_matrix(),
                              moved.preference_matrix(), equal_nan=True)
        assert np.array_equal(raw.batch_preference_matrix(),
                              moved.batch_preference_matrix(), equal_nan=True)
        assert raw.borda_scores() == moved.borda_scores()


def test_batch_matrix_marks_unsampled_pairs():
    table = OutcomeTable(["a", "b", "c"])
    table.record_outcome("a", won(1))
    table.record_outcome("b", won(0))
    matrix = table.batch_preference_matrix()
    assert matrix[0, 1] == 1.0
    assert math.isnan(matrix[0, 2])
    assert math.isnan(matrix[1, 1])
