import json

import pytest

from goalgen.dataset import (
    ChoiceDistribution,
    Dataset,
    PreferenceRecord,
    TrainingPipeline,
    TrainingStage,
    load_dataset,
    record_to_distribution,
    save_dataset,
)
from goalgen.errors import ValidationError
from goalgen.features import Colour, ObjectFeatures, Shape, enumerate_objects

RC = ObjectFeatures(Colour.RED, Shape.CROSS)
BD = ObjectFeatures(Colour.BLUE, Shape.DIAMOND)
GP = ObjectFeatures(Colour.GREEN, Shape.PLUS)


def two_record_dataset():
    pipes = {
        "one": TrainingPipeline("one", (TrainingStage(RC),)),
        "two": TrainingPipeline("two", (TrainingStage(BD, RC), TrainingStage(GP))),
    }
    records = (
        PreferenceRecord("one", RC, BD, 73, 27, 0, 100),
        PreferenceRecord("two", BD, GP, 10, 20, 70, 100),
    )
    return Dataset(pipes, records)


def test_record_to_distribution_from_counts():
    rec = PreferenceRecord("one", RC, BD, 73, 27, 0, 100)
    dist = record_to_distribution(rec)
    assert dist.as_tuple() == (0.73, 0.27, 0.0)


def test_record_to_distribution_degenerate_none():
    rec = PreferenceRecord("one", RC, BD, 0, 0, 100, 100)
    assert record_to_distribution(rec).as_tuple() == (0.0, 0.0, 1.0)


def test_record_to_distribution_plain_arithmetic():
    rec = PreferenceRecord("one", RC, BD, 50, 30, 20, 100)
    assert record_to_distribution(rec).as_tuple() == (0.5, 0.3, 0.2)


def test_count_mismatch_rejected():
    with pytest.raises(ValidationError, match="sum"):
        PreferenceRecord("one", RC, BD, 73, 27, 1, 100)


def test_identical_pair_rejected():
    with pytest.raises(ValidationError, match="distinct"):
        PreferenceRecord("one", RC, RC, 50, 50, 0, 100)


def test_distractor_equal_to_goal_rejected():
    with pytest.raises(ValidationError, match="distractor"):
        TrainingStage(RC, RC)


def test_empty_pipeline_rejected():
    with pytest.raises(ValidationError, match="stages"):
        TrainingPipeline("x", ())


def test_choice_distribution_must_sum_to_one():
    with pytest.raises(ValidationError):
        ChoiceDistribution(0.5, 0.5, 0.1)


def test_dataset_resolves_pipeline_ids():
    with pytest.raises(ValidationError, match="unknown pipeline"):
        Dataset({}, (PreferenceRecord("ghost", RC, BD, 1, 0, 0, 1),))


def test_dataset_rejects_duplicate_pair_up_to_swap():
    pipes = {"one": TrainingPipeline("one", (TrainingStage(RC),))}
    with pytest.raises(ValidationError, match="duplicate"):
        Dataset(
            pipes,
            (
                PreferenceRecord("one", RC, BD, 1, 0, 0, 1),
                PreferenceRecord("one", BD, RC, 0, 1, 0, 1),
            ),
        )


def test_dataset_canonicalises_pair_order():
    pipes = {"one": TrainingPipeline("one", (TrainingStage(RC),))}
    # BD precedes RC in canonical object order
    ds = Dataset(pipes, (PreferenceRecord("one", RC, BD, 73, 27, 0, 100),))
    rec = ds.records[0]
    assert (rec.object_a, rec.object_b) == (BD, RC)
    assert (rec.count_a, rec.count_b) == (27, 73)


def test_round_trip_identity(tmp_path):
    ds = two_record_dataset()
    path = tmp_path / "data.jsonl"
    save_dataset(ds, path)
    assert load_dataset(path) == ds


def test_round_trip_preserves_stage_order(tmp_path):
    ds = two_record_dataset()
    path = tmp_path / "data.jsonl"
    save_dataset(ds, path)
    loaded = load_dataset(path)
    stages = loaded.pipelines["two"].stages
    assert stages[0].goal == BD and stages[0].distractor == RC
    assert stages[1].goal == GP and stages[1].distractor is None


def test_load_reports_record_index(tmp_path):
    ds = two_record_dataset()
    path = tmp_path / "data.jsonl"
    save_dataset(ds, path)
    lines = path.read_text().splitlines()
    bad = json.loads(lines[1])
    bad["counts"] = [73, 27, 1]
    lines[1] = json.dumps(bad)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValidationError, match="record 0"):
        load_dataset(path)


def test_load_rejects_missing_header(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text('{"not_pipelines": {}}\n')
    with pytest.raises(ValidationError, match="pipelines"):
        load_dataset(path)


def test_load_rejects_malformed_line(tmp_path):
    ds = two_record_dataset()
    path = tmp_path / "data.jsonl"
    save_dataset(ds, path)
    with path.open("a") as fh:
        fh.write("{broken\n")
    with pytest.raises(ValidationError, match="record 2"):
        load_dataset(path)


def test_subset_restricts_pipelines_and_records():
    ds = two_record_dataset()
    sub = ds.subset({"one"})
    assert set(sub.pipelines) == {"one"}
    assert all(r.pipeline_id == "one" for r in sub.records)
    with pytest.raises(ValidationError):
        ds.subset({"one", "missing"})


def test_full_scale_dataset_loads(tmp_path):
    # 298 pipelines x 276 pairs, the full production shape
    objects = enumerate_objects()
    pair_lines = []
    for i in range(24):
        for j in range(i + 1, 24):
            a, b = objects[i], objects[j]
            pair_lines.append(
                f'"a": {{"colour": "{a.colour.value}", "shape": "{a.shape.value}"}}, '
                f'"b": {{"colour": "{b.colour.value}", "shape": "{b.shape.value}"}}, '
                '"counts": [40, 35, 25], "episodes": 100}'
            )
    header = {
        "pipelines": {
            f"p{i:03d}": [
                {
                    "goal": {"colour": "red", "shape": "cross"},
                    "distractor": None,
                }
            ]
            for i in range(298)
        }
    }
    path = tmp_path / "big.jsonl"
    with path.open("w") as fh:
        fh.write(json.dumps(header) + "\n")
        for i in range(298):
            prefix = f'{{"pipeline_id": "p{i:03d}", '
            for line in pair_lines:
                fh.write(prefix + line + "\n")
    ds = load_dataset(path)
    assert len(ds.records) == 82_248
