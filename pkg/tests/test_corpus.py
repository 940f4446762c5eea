import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from replaykit.corpus import (
    EmbeddingTable,
    load_corpus,
    load_embeddings,
    load_tags,
    save_corpus,
    split_holdout,
)
from replaykit.errors import (
    FormatError,
    MissingEmbeddingError,
    ParseError,
    SplitError,
    ValidationError,
)


def write_jsonl(path, records):
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


def row(task_id, instruction, n=0, **extra):
    return {
        "task_id": task_id,
        "instruction": instruction,
        "input": f"in{n}",
        "output": f"out{n}",
        **extra,
    }


class TestLoadCorpus:
    def test_single_instruction_histogram(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [row("a", "ins", 1), row("a", "ins", 2)])
        tasks = load_corpus(path)
        assert len(tasks) == 1
        assert tasks[0].histogram == {"ins": 1.0}

    def test_skewed_histogram(self, tmp_path):
        records = [row("A", i, n) for n, i in enumerate(["i1", "i1", "i2", "i3"])]
        tasks = load_corpus(write_jsonl(tmp_path / "c.jsonl", records))
        assert tasks[0].histogram == {"i1": 0.5, "i2": 0.25, "i3": 0.25}

    def test_empty_file(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text("")
        assert load_corpus(path) == []

    def test_ids_assigned_from_line_numbers(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [row("a", "x", 1), row("b", "y", 2)])
        tasks = load_corpus(path)
        assert tasks[0].instances[0].id == "a#1"
        assert tasks[1].instances[0].id == "b#2"

    def test_tasks_in_first_appearance_order(self, tmp_path):
        records = [row("b", "x", 1), row("a", "y", 2), row("b", "x", 3)]
        tasks = load_corpus(write_jsonl(tmp_path / "c.jsonl", records))
        assert [t.task_id for t in tasks] == ["b", "a"]

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(row("a", "x")) + "\n{broken\n")
        with pytest.raises(ParseError, match=":2:"):
            load_corpus(path)

    def test_empty_instruction_rejected(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [row("a", "")])
        with pytest.raises(ValidationError, match="empty instruction"):
            load_corpus(path)

    def test_duplicate_explicit_id_rejected(self, tmp_path):
        records = [row("a", "x", 1, id="dup"), row("a", "y", 2, id="dup")]
        path = write_jsonl(tmp_path / "c.jsonl", records)
        with pytest.raises(ValidationError, match="dup"):
            load_corpus(path)

    def test_roundtrip_is_byte_stable(self, tmp_path):
        records = [row("a", "x", 1), row("b", "y", 2), row("a", "x", 3)]
        src = write_jsonl(tmp_path / "c.jsonl", records)
        first = tmp_path / "first.jsonl"
        save_corpus(load_corpus(src), first)
        second = tmp_path / "second.jsonl"
        save_corpus(load_corpus(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_replay_of_survives_roundtrip(self, tmp_path):
        records = [row("a", "x", 1, replay_of="old_task")]
        path = write_jsonl(tmp_path / "c.jsonl", records)
        tasks = load_corpus(path)
        assert tasks[0].instances[0].replay_of == "old_task"

    @given(
        counts=st.lists(st.integers(min_value=1, max_value=6), min_size=1, max_size=5)
    )
    @settings(max_examples=50, deadline=None)
    def test_histogram_masses_are_count_fractions(self, counts):
        from conftest import build_task

        task = build_task("t", [(f"ins{i}", c) for i, c in enumerate(counts)])
        total = sum(counts)
        assert abs(sum(task.histogram.values()) - 1.0) <= 1e-12
        for i, c in enumerate(counts):
            assert task.histogram[f"ins{i}"] == c / total


class TestSplitHoldout:
    def test_twenty_percent_of_ten(self, task_factory):
        task = task_factory("t", [("ins", 10)])
        train, holdout = split_holdout(task, 0.2, seed=1)
        assert (train.size, holdout.size) == (8, 2)

    def test_forced_split_of_two(self, task_factory):
        task = task_factory("t", [("ins", 2)])
        train, holdout = split_holdout(task, 0.5, seed=1)
        assert (train.size, holdout.size) == (1, 1)

    def test_same_seed_same_partition(self, task_factory):
        task = task_factory("t", [("a", 7), ("b", 5)])
        first = split_holdout(task, 0.3, seed=9)
        second = split_holdout(task, 0.3, seed=9)
        assert [i.id for i in first[1].instances] == [i.id for i in second[1].instances]

    def test_too_small_to_split(self, task_factory):
        task = task_factory("t", [("ins", 1)])
        with pytest.raises(SplitError):
            split_holdout(task, 0.2, seed=0)

    def test_holdout_clamped_to_leave_training_data(self, task_factory):
        task = task_factory("t", [("ins", 3)])
        train, holdout = split_holdout(task, 0.99, seed=0)
        assert train.size == 1 and holdout.size == 2

    @given(
        n=st.integers(min_value=2, max_value=40),
        fraction=st.floats(min_value=0.01, max_value=0.99),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
    )
    @settings(max_examples=80, deadline=None)
    def test_split_is_a_partition(self, n, fraction, seed):
        from conftest import build_task

        task = build_task("t", [("a", (n + 1) // 2), ("b", n // 2)])
        train, holdout = split_holdout(task, fraction, seed)
        train_ids = {i.id for i in train.instances}
        holdout_ids = {i.id for i in holdout.instances}
        assert train_ids | holdout_ids == {i.id for i in task.instances}
        assert not train_ids & holdout_ids
        assert abs(sum(train.histogram.values()) - 1.0) <= 1e-12


class TestEmbeddings:
    def test_dim_inferred(self, tmp_path):
        path = write_jsonl(tmp_path / "e.jsonl", [{"key": "k", "vector": [1, 2, 3, 4]}])
        table = load_embeddings(path)
        assert table.dim == 4
        assert np.allclose(table.lookup("k"), [1, 2, 3, 4])

    def test_ragged_vector_rejected(self, tmp_path):
        path = write_jsonl(
            tmp_path / "e.jsonl",
            [{"key": "a", "vector": [1, 2]}, {"key": "b", "vector": [1, 2, 3]}],
        )
        with pytest.raises(FormatError, match="length"):
            load_embeddings(path)

    def test_zero_vector_rejected(self, tmp_path):
        path = write_jsonl(tmp_path / "e.jsonl", [{"key": "z", "vector": [0.0, 0.0]}])
        with pytest.raises(FormatError, match="all-zero"):
            load_embeddings(path)

    def test_missing_key_names_the_instruction(self):
        table = EmbeddingTable(dim=2, rows={"present": np.array([1.0, 0.0])})
        with pytest.raises(MissingEmbeddingError, match="absent instruction"):
            table.lookup("absent instruction")


class TestTags:
    def test_load_and_lookup(self, tmp_path):
        path = write_jsonl(tmp_path / "t.jsonl", [{"key": "ins", "tags": ["a", "b"]}])
        table = load_tags(path)
        assert table.tags_for("ins") == ["a", "b"]
        assert table.tags_for("unknown") == []

    def test_bad_tags_field(self, tmp_path):
        path = write_jsonl(tmp_path / "t.jsonl", [{"key": "ins", "tags": "oops"}])
        with pytest.raises(FormatError):
            load_tags(path)


class TestCategoryMap:
    def test_load(self, tmp_path):
        from replaykit.corpus import load_category_map

        path = tmp_path / "categories.json"
        path.write_text(json.dumps({"Mathematics": ["t1", "t2"], "Code": ["t3"]}))
        assert load_category_map(path) == {"Mathematics": ["t1", "t2"], "Code": ["t3"]}

    def test_bad_shape_rejected(self, tmp_path):
        from replaykit.corpus import load_category_map

        path = tmp_path / "categories.json"
        path.write_text(json.dumps({"Mathematics": "t1"}))
        with pytest.raises(FormatError):
            load_category_map(path)
