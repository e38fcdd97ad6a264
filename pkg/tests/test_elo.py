import math

import numpy as np
import pytest

from goalgen.dataset import PreferenceRecord
from goalgen.elo import (
    EloTable,
    PairwiseComparison,
    elo_holdout_validation,
    elo_predict,
    elo_table_to_csv,
    fit_elo,
    marginalised_elo,
    to_pairwise,
)
from goalgen.errors import ValidationError
from goalgen.features import Colour, ObjectFeatures, Shape, enumerate_objects

RC = ObjectFeatures(Colour.RED, Shape.CROSS)
BD = ObjectFeatures(Colour.BLUE, Shape.DIAMOND)


def record(count_a, count_b, count_none, episodes=100, a=RC, b=BD, pid="agent"):
    return PreferenceRecord(pid, a, b, count_a, count_b, count_none, episodes)


def test_to_pairwise_no_null_mass():
    a_vs_b, a_vs_none, b_vs_none = to_pairwise(record(73, 27, 0))
    assert a_vs_b.win_rate_a == pytest.approx(0.73)
    assert a_vs_b.weight == pytest.approx(1.0)
    assert a_vs_none.win_rate_a == 1.0
    assert a_vs_none.weight == pytest.approx(0.73)
    assert b_vs_none.weight == pytest.approx(0.27)


def test_to_pairwise_even_split():
    _, a_vs_none, _ = to_pairwise(record(50, 50, 0))
    assert a_vs_none.win_rate_a == 1.0
    assert a_vs_none.weight == pytest.approx(0.5)


def test_to_pairwise_zero_mass_comparison():
    a_vs_b, a_vs_none, b_vs_none = to_pairwise(record(0, 0, 100))
    assert a_vs_b.weight == 0.0
    assert a_vs_none.win_rate_a == 0.0
    assert b_vs_none.weight == pytest.approx(1.0)


def test_masked_rates_renormalise():
    a_vs_b, a_vs_none, b_vs_none = to_pairwise(record(50, 30, 20))
    assert a_vs_b.win_rate_a == pytest.approx(50 / 80)
    assert a_vs_none.win_rate_a == pytest.approx(50 / 70)
    assert b_vs_none.win_rate_a == pytest.approx(30 / 50)


def test_fit_symmetric_data_gives_equal_scores():
    comparisons = to_pairwise(record(40, 40, 20))
    table = fit_elo(comparisons)
    assert table.scores[RC] == pytest.approx(table.scores[BD], abs=1e-6)


def test_fit_single_comparison_recovers_400_gap():
    comparisons = [PairwiseComparison(RC, BD, 10 / 11, 1.0)]
    table = fit_elo(comparisons + [PairwiseComparison(RC, None, 0.5, 1.0)])
    gap = table.scores[RC] - table.scores[BD]
    assert gap == pytest.approx(400.0, abs=2.0)


def test_anchoring_no_goal_at_zero():
    table = fit_elo(to_pairwise(record(60, 25, 15)))
    assert table.no_goal_score == 0.0
    # P(object > no-goal) is the link applied to the anchored score itself
    for obj in (RC, BD):
        expected = 1.0 / (1.0 + 10 ** (-table.scores[obj] / 400.0))
        assert elo_predict(table, obj, None) == pytest.approx(expected)


def test_duplicating_comparisons_leaves_fit_unchanged():
    # The likelihood argmax is duplication-invariant; the fixed 1e-8 ridge
    # breaks exactness by ~0.1 Elo in 240, hence the sub-Elo tolerance.
    comparisons = to_pairwise(record(60, 25, 15))
    t1 = fit_elo(comparisons)
    t2 = fit_elo(comparisons + comparisons)
    for obj in t1.scores:
        assert t1.scores[obj] == pytest.approx(t2.scores[obj], abs=0.5)


def test_elo_predict_values():
    table = EloTable(scores={RC: 400.0, BD: 0.0}, no_goal_score=0.0)
    assert elo_predict(table, RC, BD) == pytest.approx(10 / 11)
    assert elo_predict(table, BD, RC) == pytest.approx(1 / 11)
    assert elo_predict(table, BD, None) == pytest.approx(0.5)


def test_elo_predict_unknown_competitor():
    table = EloTable(scores={RC: 0.0})
    with pytest.raises(ValidationError, match="unknown"):
        elo_predict(table, RC, BD)


def test_logit_additivity_exact():
    table = EloTable(scores={RC: 137.0, BD: -88.0}, no_goal_score=0.0)

    def logit10(p):
        return 400.0 * math.log10(p / (1 - p))

    pab = elo_predict(table, RC, BD)
    pbn = elo_predict(table, BD, None)
    pan = elo_predict(table, RC, None)
    assert logit10(pab) + logit10(pbn) == pytest.approx(logit10(pan), abs=1e-9)


def test_marginalised_constant_table():
    table = EloTable(scores={o: 42.0 for o in enumerate_objects()})
    for feature in ("black", "ring", "cross", "green"):
        assert marginalised_elo(table, feature) == pytest.approx(42.0)


def test_marginalised_cross_block():
    scores = {
        o: 100.0 if o.shape is Shape.CROSS else 0.0 for o in enumerate_objects()
    }
    table = EloTable(scores=scores)
    assert marginalised_elo(table, "cross") == pytest.approx(100.0)
    assert marginalised_elo(table, "ring") == pytest.approx(0.0)


def test_marginalised_colours_average_to_global_mean():
    rng = np.random.default_rng(3)
    table = EloTable(
        scores={o: float(rng.normal(0, 120)) for o in enumerate_objects()}
    )
    colour_means = [
        marginalised_elo(table, f) for f in ("black", "blue", "green", "red")
    ]
    global_mean = np.mean(list(table.scores.values()))
    # each colour covers 6 objects, so the colour means average to the global mean
    assert np.mean(colour_means) == pytest.approx(global_mean)


def test_marginalised_unknown_feature():
    table = EloTable(scores={RC: 0.0})
    with pytest.raises(ValidationError):
        marginalised_elo(table, "purple")


def _boltzmann_records(rng, scores, episodes=10_000, pid="agent"):
    """Three-way counts from softmax([kVa, kVb, 0]) for every object pair."""
    k = math.log(10) / 400.0
    objects = enumerate_objects()
    records = []
    for i in range(len(objects)):
        for j in range(i + 1, len(objects)):
            a, b = objects[i], objects[j]
            logits = np.array([k * scores[a], k * scores[b], 0.0])
            p = np.exp(logits - logits.max())
            p /= p.sum()
            c = rng.multinomial(episodes, p)
            records.append(
                PreferenceRecord(pid, a, b, int(c[0]), int(c[1]), int(c[2]), episodes)
            )
    return records


def test_holdout_on_boltzmann_data():
    rng = np.random.default_rng(17)
    scores = {o: float(rng.uniform(-350, 350)) for o in enumerate_objects()}
    records = _boltzmann_records(rng, scores)
    report = elo_holdout_validation(records, k=4, rng_seed=1)
    assert report.directional_accuracy > 0.95
    assert report.kl < 0.02


def test_holdout_near_perfect_when_data_matches():
    rng = np.random.default_rng(23)
    scores = {o: float(rng.uniform(-200, 200)) for o in enumerate_objects()}
    records = _boltzmann_records(rng, scores, episodes=100_000)
    report = elo_holdout_validation(records, k=4, rng_seed=2)
    assert report.kl < 1e-3


def test_holdout_requires_enough_records():
    records = [record(50, 30, 20)]
    with pytest.raises(ValidationError):
        elo_holdout_validation(records, k=4)


def test_fit_requires_positive_weight():
    with pytest.raises(ValidationError):
        fit_elo([PairwiseComparison(RC, BD, 0.5, 0.0)])


def test_table_csv_round(tmp_path):
    table = EloTable(scores={RC: 120.5, BD: -33.25})
    path = tmp_path / "elo.csv"
    elo_table_to_csv(table, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "object_colour,object_shape,score"
    assert lines[-1].startswith("no-goal,no-goal,")
    assert len(lines) == 4
