import itertools
import math

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from rank_analysis import (DegenerateInput, EmptyCell, aggregate,
                           best_per_problem, friedman_test, posthoc_wilcoxon,
                           rank_algorithms, write_rank_table,
                           wilcoxon_signed_rank)
from tournament_handler import RunRecord


def record(agent="MCTS", win=True, score=1.0, game="twoarm", budget=250,
           c=0.5, rl=10, episode=0):
    return RunRecord(game, agent, budget, c, rl, None, 0, episode, win,
                     score, 1, budget)


def summary(rows):
    """Builds an aggregate() style frame from (game, budget, agent,
    win_rate, mean_score) rows."""
    return pd.DataFrame([
        {"game": game, "budget": budget, "agent": agent, "C": 0.5, "RL": 10,
         "Q": math.nan, "win_rate": win_rate, "mean_score": score,
         "episodes": 4}
        for game, budget, agent, win_rate, score in rows])


HAND_RANKED = summary([
    ("g1", 250, "A", 1.0, 5), ("g1", 250, "B", 0.5, 9), ("g1", 250, "C", 0.5, 3),
    ("g1", 500, "A", 0.5, 1), ("g1", 500, "B", 0.5, 1), ("g1", 500, "C", 1.0, 0),
    ("g2", 250, "A", 0.0, 2), ("g2", 250, "B", 0.25, 0), ("g2", 250, "C", 0.0, 1),
    ("g2", 500, "A", 1.0, 1), ("g2", 500, "B", 1.0, 2), ("g2", 500, "C", 1.0, 3)
])


def test_aggregate_win_rate():
    records = [record(win=win, episode=i)
               for i, win in enumerate([True, True, False, True])]
    cells = aggregate(records)
    assert len(cells) == 1
    assert cells["win_rate"][0] == 0.75
    assert cells["episodes"][0] == 4


def test_aggregate_won_only_scores():
    records = [record(win=True, score=4.0), record(win=False, score=0.0),
               record(agent="O-MCTS", win=False, score=2.0)]
    cells = aggregate(records, won_only=True)
    assert cells["mean_score"][0] == 4.0
    assert math.isnan(cells["mean_score"][1])
    assert aggregate(records)["mean_score"][0] == 2.0


def test_aggregate_skips_failed_rows():
    failed = RunRecord("twoarm", "MCTS", 250, 0.5, 10, None, 0, 1)
    cells = aggregate([record(), failed])
    assert cells["episodes"][0] == 1
    with pytest.raises(EmptyCell):
        aggregate([failed])


def test_best_per_problem():
    records = [record(c=0.5, win=False), record(c=1.0, win=True),
               record(c=1.5, win=True, score=0.5)]
    best = best_per_problem(aggregate(records))
    assert len(best) == 1
    assert best["C"][0] == 1.0


def test_tied_algorithms_share_midrank():
    table = rank_algorithms(summary([("g", 250, "A", 0.5, 1.0),
                                     ("g", 250, "B", 0.5, 1.0),
                                     ("g", 250, "C", 0.1, 9.0)]))
    ranks = table.ranks.loc[("g", 250)]
    assert ranks["A"] == ranks["B"] == 1.5
    assert ranks["C"] == 3.0


def test_average_ranks_match_hand_ranking():
    table = rank_algorithms(HAND_RANKED)
    assert table.average.to_dict() == {"B": 1.875, "C": 2.0, "A": 2.125}
    for _, ranks in table.ranks.iterrows():
        assert sorted(ranks) in ([1.0, 2.0, 3.0], [1.0, 2.5, 2.5])


def test_ranks_ignore_score_scale():
    scaled = HAND_RANKED.assign(mean_score=HAND_RANKED["mean_score"] * 7.5)
    assert rank_algorithms(scaled).ranks.equals(
        rank_algorithms(HAND_RANKED).ranks)


def test_rank_configurations():
    records = [record(c=0.5, win=True), record(c=1.0, win=False),
               record(c=0.5, win=False, game="gapworld"),
               record(c=1.0, win=True, game="gapworld")]
    table = rank_algorithms(aggregate(records), by=("agent", "C", "RL", "Q"))
    assert set(table.average.index) == {"MCTS C=0.5 RL=10", "MCTS C=1 RL=10"}
    assert table.average.tolist() == [1.5, 1.5]


def test_rank_empty_summary():
    with pytest.raises(EmptyCell):
        rank_algorithms(HAND_RANKED.iloc[0:0])


def midranks_by_counting(row):
    return [sum(other < value for other in row)
            + (sum(other == value for other in row) + 1) / 2 for value in row]


def friedman_by_counting(matrix):
    blocks, k = len(matrix), len(matrix[0])
    ranks = [midranks_by_counting(row) for row in matrix]
    sums = [sum(row[j] for row in ranks) for j in range(k)]
    squares = sum(r * r for row in ranks for r in row)
    centre = blocks * k * (k + 1) ** 2 / 4
    spread = sum(s * s for s in sums) - blocks ** 2 * k * (k + 1) ** 2 / 4
    return (k - 1) * spread / (squares - centre)


def test_friedman_identical_columns():
    assert friedman_test([[3, 3, 3], [1, 1, 1], [2, 2, 2]]) == (0.0, 1.0)


def test_friedman_matches_counting_oracle():
    fixture = [[1, 2, 3], [2, 3, 1], [1, 3, 2], [1, 2, 3]]
    statistic, p_value = friedman_test(fixture)
    assert statistic == pytest.approx(friedman_by_counting(fixture))
    assert statistic == pytest.approx(3.5)
    assert p_value == pytest.approx(stats.chi2.sf(3.5, 2))

    rng = np.random.default_rng(5)
    for _ in range(200):
        blocks, k = int(rng.integers(2, 9)), int(rng.integers(2, 6))
        matrix = rng.integers(0, 4, size=(blocks, k)).tolist()
        if all(len(set(row)) == 1 for row in matrix):
            continue
        statistic, _ = friedman_test(matrix)
        assert statistic == pytest.approx(friedman_by_counting(matrix))


def test_friedman_agrees_with_scipy():
    matrix = np.random.default_rng(2).random((8, 4))
    expected = stats.friedmanchisquare(*matrix.T)
    assert friedman_test(matrix) == pytest.approx(tuple(expected))


def test_friedman_needs_two_blocks():
    with pytest.raises(DegenerateInput):
        friedman_test([[1, 2, 3]])


def wilcoxon_by_enumeration(x, y):
    differences = [a - b for a, b in zip(x, y) if a != b]
    ranks = midranks_by_counting([abs(d) for d in differences])
    doubled = [round(2 * r) for r in ranks]
    observed = sum(r for r, d in zip(doubled, differences) if d > 0)
    sums = [sum(r for r, sign in zip(doubled, signs) if sign)
            for signs in itertools.product([0, 1], repeat=len(doubled))]
    lower = sum(s <= observed for s in sums) / len(sums)
    upper = sum(s >= observed for s in sums) / len(sums)
    return observed / 2, min(1.0, 2 * min(lower, upper))


def test_wilcoxon_all_positive():
    assert wilcoxon_signed_rank([2, 3, 4, 5, 6, 7], [1] * 6) == (21.0, 0.03125)


def test_wilcoxon_matches_enumeration():
    rng = np.random.default_rng(8)
    checked = 0
    while checked < 200:
        n = int(rng.integers(1, 9))
        x = rng.integers(0, 5, size=n).tolist()
        y = rng.integers(0, 5, size=n).tolist()
        if x == y:
            continue
        statistic, p_value = wilcoxon_signed_rank(x, y)
        expected = wilcoxon_by_enumeration(x, y)
        assert statistic == expected[0]
        assert p_value == pytest.approx(expected[1], abs=1e-12)
        checked += 1


def test_wilcoxon_drops_zero_differences():
    assert wilcoxon_signed_rank([2, 3, 4, 5, 6, 7, 1],
                                [1, 1, 1, 1, 1, 1, 1]) == (21.0, 0.03125)


def test_wilcoxon_normal_approximation():
    rng = np.random.default_rng(3)
    x, y = rng.random(40), rng.random(40) + 0.2
    statistic, p_value = wilcoxon_signed_rank(x, y)
    expected = stats.wilcoxon(x, y, correction=False, method="approx")
    assert p_value == pytest.approx(expected.pvalue, rel=1e-9)
    differences = x - y
    assert statistic == pytest.approx(
        stats.rankdata(np.abs(differences))[differences > 0].sum())


def test_wilcoxon_errors():
    with pytest.raises(DegenerateInput):
        wilcoxon_signed_rank([1, 2], [1, 2])
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1, 2], [1])


def test_posthoc_wilcoxon_pairs():
    table = rank_algorithms(HAND_RANKED)
    posthoc = posthoc_wilcoxon(table, alpha=0.01)
    assert len(posthoc) == 3
    assert list(posthoc.columns) == ["a", "b", "statistic", "p_value",
                                     "significant"]
    assert not posthoc["significant"].any()


def test_posthoc_wilcoxon_identical_ranks():
    table = rank_algorithms(summary([("g", 250, "A", 0.5, 1.0),
                                     ("g", 250, "B", 0.5, 1.0),
                                     ("h", 250, "A", 0.5, 1.0),
                                     ("h", 250, "B", 0.5, 1.0)]))
    posthoc = posthoc_wilcoxon(table)
    assert posthoc["p_value"].tolist() == [1.0]


def test_write_rank_table(tmp_path):
    table = rank_algorithms(HAND_RANKED)
    csv_path, text_path = tmp_path / "ranks.csv", tmp_path / "ranks.txt"
    write_rank_table(table, str(csv_path), "csv")
    write_rank_table(table, str(text_path), "text")
    frame = pd.read_csv(csv_path, index_col="problem")
    assert list(frame.columns) == ["B", "C", "A"]
    assert frame.loc["average rank", "A"] == 2.125
    assert "g2 @ 500" in text_path.read_text()
    with pytest.raises(ValueError):
        write_rank_table(table, str(tmp_path / "ranks.xml"), "xml")
