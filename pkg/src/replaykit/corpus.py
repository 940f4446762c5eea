"""Corpus ingestion: task datasets, embeddings, tags, and holdout splits.

File formats (all JSON Lines unless noted):

* dataset rows: ``{"task_id", "instruction", "input", "output"}`` with an
  optional ``"id"``; missing ids are assigned as ``<task_id>#<line>`` using
  the 1-based line number. Replay outputs add a ``"replay_of"`` field naming
  the source task.
* embedding rows: ``{"key": str, "vector": [float, ...]}``, all vectors of
  equal length, no all-zero vectors.
* tag rows: ``{"key": <instruction>, "tags": [str, ...]}``.
* category map (plain JSON): ``{category_name: [task_id, ...]}``.

Instruction identity is exact string equality after Unicode NFC
normalization; every key read from disk is normalized the same way so that
corpus, embedding, and tag lookups agree.
"""

import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    FormatError,
    MissingEmbeddingError,
    ParseError,
    SplitError,
    ValidationError,
)
from .rng import rng_for

_DATASET_FIELDS = ("task_id", "instruction", "input", "output")


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


@dataclass(frozen=True)
class Instance:
    """One training example."""

    id: str
    task_id: str
    instruction: str
    input: str
    output: str
    replay_of: str | None = None


def instance_key(instance: Instance) -> str:
    """Embedding-table key for a whole instance (instruction plus input).

    Instance-level embeddings are precomputed externally under this exact
    key: the instruction, a newline, and the input text.
    """
    return instance.instruction + "\n" + instance.input


@dataclass(frozen=True)
class TaskDataset:
    """Instances of one task plus its empirical instruction distribution."""

    task_id: str
    instances: tuple[Instance, ...]
    histogram: dict[str, float] = field(default_factory=dict)

    @staticmethod
    def from_instances(task_id: str, instances: Sequence[Instance]) -> "TaskDataset":
        counts: dict[str, int] = {}
        for inst in instances:
            counts[inst.instruction] = counts.get(inst.instruction, 0) + 1
        n = len(instances)
        histogram = {ins: c / n for ins, c in counts.items()} if n else {}
        return TaskDataset(task_id=task_id, instances=tuple(instances), histogram=histogram)

    @property
    def size(self) -> int:
        return len(self.instances)

    def instructions(self) -> list[str]:
        """Distinct instructions in first-appearance order."""
        return list(self.histogram.keys())

    def instances_by_instruction(self) -> dict[str, list[Instance]]:
        buckets: dict[str, list[Instance]] = {ins: [] for ins in self.histogram}
        for inst in self.instances:
            buckets[inst.instruction].append(inst)
        return buckets


class EmbeddingTable:
    """Mapping from text key to a fixed-dimension vector."""

    def __init__(self, dim: int, rows: Mapping[str, np.ndarray]):
        if dim <= 0:
            raise ValidationError(f"embedding dim must be positive, got {dim}")
        self.dim = int(dim)
        self.rows: dict[str, np.ndarray] = {}
        for key, vec in rows.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self.dim,):
                raise FormatError(
                    f"embedding for {key!r} has length {arr.shape}, expected ({self.dim},)"
                )
            if not np.any(arr):
                raise FormatError(f"embedding for {key!r} is all-zero")
            self.rows[nfc(key)] = arr

    def __contains__(self, key: str) -> bool:
        return nfc(key) in self.rows

    def __len__(self) -> int:
        return len(self.rows)

    def lookup(self, key: str) -> np.ndarray:
        try:
            return self.rows[nfc(key)]
        except KeyError:
            raise MissingEmbeddingError(key) from None

    def require(self, keys: Iterable[str]) -> None:
        """Fail early with the first missing key named."""
        for key in keys:
            if key not in self:
                raise MissingEmbeddingError(key)


@dataclass
class TagTable:
    """Raw (or canonical) tags per instruction; missing rows mean no tags."""

    rows: dict[str, list[str]]

    def tags_for(self, instruction: str) -> list[str]:
        return self.rows.get(nfc(instruction), [])


def _parse_line(line: str, lineno: int, path: str) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(record, dict):
        raise ParseError(f"{path}:{lineno}: expected an object, got {type(record).__name__}")
    return record


def load_corpus(path: str | Path, format: str = "jsonl") -> list[TaskDataset]:
    """Load a dataset file and group instances by task in first-appearance order."""
    if format != "jsonl":
        raise ValidationError(f"unsupported corpus format: {format!r}")
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"corpus file not found: {path}")

    by_task: dict[str, list[Instance]] = {}
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = _parse_line(line, lineno, str(path))
            missing = [f for f in _DATASET_FIELDS if f not in record]
            if missing:
                raise ParseError(f"{path}:{lineno}: missing fields {missing}")
            for f in _DATASET_FIELDS:
                if not isinstance(record[f], str):
                    raise ParseError(f"{path}:{lineno}: field {f!r} must be a string")
            task_id = record["task_id"]
            instruction = nfc(record["instruction"])
            if not instruction:
                raise ValidationError(f"{path}:{lineno}: empty instruction")
            if not task_id:
                raise ValidationError(f"{path}:{lineno}: empty task_id")
            explicit = record.get("id")
            if explicit is not None and not isinstance(explicit, str):
                raise ParseError(f"{path}:{lineno}: field 'id' must be a string")
            inst_id = explicit if explicit is not None else f"{task_id}#{lineno}"
            if inst_id in seen_ids:
                raise ValidationError(f"{path}:{lineno}: duplicate instance id {inst_id!r}")
            seen_ids.add(inst_id)
            replay_of = record.get("replay_of")
            by_task.setdefault(task_id, []).append(
                Instance(
                    id=inst_id,
                    task_id=task_id,
                    instruction=instruction,
                    input=record["input"],
                    output=record["output"],
                    replay_of=replay_of,
                )
            )
    return [TaskDataset.from_instances(task_id, instances) for task_id, instances in by_task.items()]


def instance_to_record(instance: Instance) -> dict:
    record = {
        "id": instance.id,
        "task_id": instance.task_id,
        "instruction": instance.instruction,
        "input": instance.input,
        "output": instance.output,
    }
    if instance.replay_of is not None:
        record["replay_of"] = instance.replay_of
    return record


def save_corpus(tasks_or_instances: Iterable, path: str | Path) -> int:
    """Write instances as JSONL in the canonical field order; returns row count.

    Accepts either TaskDatasets or bare Instances. save(load(x)) is a fixed
    point: re-serializing a file written here reproduces it byte for byte.
    """
    rows = 0
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for item in tasks_or_instances:
            instances = item.instances if isinstance(item, TaskDataset) else [item]
            for inst in instances:
                fh.write(json.dumps(instance_to_record(inst), ensure_ascii=False) + "\n")
                rows += 1
    return rows


def split_holdout(task: TaskDataset, fraction: float, seed: int) -> tuple[TaskDataset, TaskDataset]:
    """Partition a task into train/holdout, holding out ``round(fraction * n)``.

    The holdout size rounds half away from zero and is clamped to
    ``[1, n - 1]``. Both sides keep the original instance order and get
    recomputed histograms. Deterministic under the seed.
    """
    n = task.size
    if n < 2:
        raise SplitError(f"task {task.task_id!r} has {n} instances; need at least 2 to split")
    if not 0.0 < fraction < 1.0:
        raise ValidationError(f"holdout fraction must be in (0, 1), got {fraction}")
    k = int(n * fraction + 0.5)
    k = max(1, min(n - 1, k))
    rng = rng_for(seed, "holdout", task.task_id)
    holdout_idx = set(rng.choice(n, size=k, replace=False).tolist())
    train = [inst for i, inst in enumerate(task.instances) if i not in holdout_idx]
    holdout = [inst for i, inst in enumerate(task.instances) if i in holdout_idx]
    return (
        TaskDataset.from_instances(task.task_id, train),
        TaskDataset.from_instances(task.task_id, holdout),
    )


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Load an embedding table, validating dimension consistency."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"embedding file not found: {path}")
    rows: dict[str, list[float]] = {}
    dim: int | None = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = _parse_line(line, lineno, str(path))
            if "key" not in record or "vector" not in record:
                raise ParseError(f"{path}:{lineno}: expected fields 'key' and 'vector'")
            vec = record["vector"]
            if not isinstance(vec, list) or not vec:
                raise FormatError(f"{path}:{lineno}: 'vector' must be a non-empty array")
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise FormatError(
                    f"{path}:{lineno}: vector of length {len(vec)}, expected {dim}"
                )
            rows[record["key"]] = vec
    if dim is None:
        raise FormatError(f"{path}: no embedding rows")
    return EmbeddingTable(dim=dim, rows=rows)


def load_tags(path: str | Path) -> TagTable:
    """Load a tag table keyed by instruction text."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"tag file not found: {path}")
    rows: dict[str, list[str]] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = _parse_line(line, lineno, str(path))
            if "key" not in record or "tags" not in record:
                raise ParseError(f"{path}:{lineno}: expected fields 'key' and 'tags'")
            tags = record["tags"]
            if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
                raise FormatError(f"{path}:{lineno}: 'tags' must be an array of strings")
            rows[nfc(record["key"])] = list(tags)
    return TagTable(rows=rows)


def save_tags(table: TagTable, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for key, tags in table.rows.items():
            fh.write(json.dumps({"key": key, "tags": tags}, ensure_ascii=False) + "\n")


def load_category_map(path: str | Path) -> dict[str, list[str]]:
    """Load the optional category-mapping file: category name -> task ids."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"category map not found: {path}")
    with path.open("r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise FormatError(f"{path}: category map must be a JSON object")
    for name, ids in data.items():
        if not isinstance(ids, list) or not all(isinstance(t, str) for t in ids):
            raise FormatError(f"{path}: category {name!r} must map to an array of task ids")
    return data
