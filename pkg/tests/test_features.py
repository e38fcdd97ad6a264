import numpy as np

from goalgen.features import (
    FEATURE_NAMES,
    Colour,
    ObjectFeatures,
    Shape,
    encode_features,
    enumerate_eval_pairs,
    enumerate_objects,
    enumerate_training_goals,
    object_index,
)


def test_feature_order_is_canonical():
    assert FEATURE_NAMES == (
        "black", "blue", "green", "red",
        "circle", "cross", "diamond", "hollow-diamond", "plus", "ring",
    )


def test_encode_red_cross():
    vec = encode_features(ObjectFeatures(Colour.RED, Shape.CROSS))
    assert vec.tolist() == [0, 0, 0, 1, 0, 1, 0, 0, 0, 0]


def test_encode_green_circle():
    vec = encode_features(ObjectFeatures(Colour.GREEN, Shape.CIRCLE))
    assert vec.tolist() == [0, 0, 1, 0, 1, 0, 0, 0, 0, 0]


def test_encode_null_object_is_zero():
    assert encode_features(None).tolist() == [0.0] * 10


def test_every_encoding_is_two_hot():
    for obj in enumerate_objects():
        vec = encode_features(obj)
        assert vec.sum() == 2
        assert set(vec.tolist()) <= {0.0, 1.0}


def test_encoding_injective_over_objects_and_null():
    seen = {tuple(encode_features(None))}
    for obj in enumerate_objects():
        key = tuple(encode_features(obj))
        assert key not in seen
        seen.add(key)
    assert len(seen) == 25


def test_enumerate_objects_count_and_order():
    objects = enumerate_objects()
    assert len(objects) == 24
    assert len(set(objects)) == 24
    # colour-major, canonical within each colour
    assert objects[0] == ObjectFeatures(Colour.BLACK, Shape.CIRCLE)
    assert objects[5] == ObjectFeatures(Colour.BLACK, Shape.RING)
    assert objects[6] == ObjectFeatures(Colour.BLUE, Shape.CIRCLE)


def test_training_goal_filter_gives_twelve():
    goals = enumerate_training_goals()
    assert len(goals) == 12
    excluded = {
        o
        for o in enumerate_objects()
        if o.colour is Colour.GREEN
        or o.shape in (Shape.CIRCLE, Shape.HOLLOW_DIAMOND)
    }
    assert set(goals) == set(enumerate_objects()) - excluded


def test_four_cross_objects():
    crosses = [o for o in enumerate_objects() if o.shape is Shape.CROSS]
    assert len(crosses) == 4
    assert {o.colour for o in crosses} == set(Colour)


def test_eval_pairs_count():
    assert len(enumerate_eval_pairs()) == 276


def test_eval_pairs_distinct_members():
    for a, b in enumerate_eval_pairs():
        assert a != b


def test_eval_pairs_each_object_in_23():
    counts: dict[ObjectFeatures, int] = {}
    for a, b in enumerate_eval_pairs():
        counts[a] = counts.get(a, 0) + 1
        counts[b] = counts.get(b, 0) + 1
    assert all(c == 23 for c in counts.values())
    assert len(counts) == 24


def test_eval_pairs_deterministic_order():
    assert enumerate_eval_pairs() == enumerate_eval_pairs()


def test_object_index_matches_enumeration():
    for i, obj in enumerate(enumerate_objects()):
        assert object_index(obj) == i


def test_feature_indices_match_names():
    obj = ObjectFeatures(Colour.BLUE, Shape.RING)
    ci, si = obj.feature_indices()
    assert FEATURE_NAMES[ci] == "blue"
    assert FEATURE_NAMES[si] == "ring"
