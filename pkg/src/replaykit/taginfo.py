"""Intention-tag normalization and instruction information scoring.

Raw tags arrive from an external tagger (see ``docs/tagging_prompt.md``)
and are cleaned in two steps: a rule stage (special characters to spaces,
lowercase, lemmatization) and a semantic stage (density-based clustering
of tag embeddings, merging tags whose cosine distance is within a
threshold). Cleaned tags feed an IDF-style score per instruction,

    score(instruction) = sum over its tags t of ln(N / f_t)

where N is the number of instructions held in the cross-stage pool and
f_t counts the pooled instructions carrying tag t (once per instruction).
Instructions with many rare tags score high.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np

from .corpus import EmbeddingTable, TagTable, TaskDataset, nfc
from .errors import PoolLookupError, PoolStateError, ValidationError
from .transport import cosine_distance

logger = logging.getLogger(__name__)

RULE_STAGE_ID = "lower-alnum-lemma-v1"
DEFAULT_SEMANTIC_THRESHOLD = 0.1

# words the suffix stripper must leave alone
_LEMMA_EXCEPTIONS = {
    "analysis",
    "basis",
    "bias",
    "canvas",
    "census",
    "corpus",
    "gas",
    "lens",
    "news",
    "series",
    "species",
    "status",
    "synthesis",
}
_UNDOUBLE = set("bdgmnpt")


def _strip_suffix(token: str) -> str:
    if token in _LEMMA_EXCEPTIONS or len(token) < 4:
        return token
    if token.endswith("ies"):
        return token[:-3] + "y"
    if token.endswith("sses"):
        return token[:-2]
    for suffix in ("ing", "ed"):
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            stem = token[: -len(suffix)]
            if len(stem) >= 4 and stem[-1] == stem[-2] and stem[-1] in _UNDOUBLE:
                stem = stem[:-1]
            return stem
    if token.endswith("es") and len(token) >= 5 and token[-3] in "xz":
        return token[:-2]
    if token.endswith("ches") or token.endswith("shes"):
        return token[:-2]
    if token.endswith("s") and not token.endswith("ss") and not token.endswith("us") \
            and not token.endswith("is"):
        return token[:-1]
    return token


def default_lemmatizer(token: str) -> str:
    """Small rule-based English suffix stripper (plural -s/-es, -ing, -ed).

    Strips to a fixed point so its outputs map to themselves; consistency
    matters more than linguistic accuracy here. Custom lemmatizers plugged
    into the pipeline must satisfy the same fixed-point property.
    """
    while True:
        stripped = _strip_suffix(token)
        if stripped == token:
            return token
        token = stripped


def normalize_rule(raw_tag: str, lemmatizer: Callable[[str], str] | None = None) -> str:
    """Rule-stage normalization of one raw tag.

    Non-alphanumeric characters become single spaces, text is lowercased,
    whitespace is collapsed and trimmed, and each token goes through the
    lemmatizer. May return an empty string; callers drop those.

    The result is NFC-normalized so idempotence holds structurally: a
    second application sees text the first pass already produced in
    canonical form (lowercasing can emit decomposed sequences).
    """
    if lemmatizer is None:
        lemmatizer = default_lemmatizer
    lowered = nfc(raw_tag).lower()
    cleaned = "".join(ch if ch.isalnum() else " " for ch in lowered)
    return nfc(" ".join(lemmatizer(tok) for tok in cleaned.split()))


def semantic_aggregate(
    tags: Iterable[str],
    tag_emb: EmbeddingTable,
    threshold: float = DEFAULT_SEMANTIC_THRESHOLD,
    min_samples: int = 2,
) -> dict[str, str]:
    """Merge semantically close tags via density-based clustering.

    A tag is a core point when at least ``min_samples`` tags (itself
    included) lie within cosine distance ``threshold``. Clusters are the
    usual density-reachable components; every member maps to the
    lexicographically smallest member, noise tags map to themselves.
    """
    if not 0.0 < threshold < 1.0:
        raise ValidationError(f"semantic threshold must be in (0, 1), got {threshold}")
    items = sorted(set(tags))
    if not items:
        return {}
    vectors = [tag_emb.lookup(t) for t in items]
    n = len(items)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dist[i, j] = dist[j, i] = cosine_distance(vectors[i], vectors[j])
    neighbor_sets = [np.flatnonzero(dist[i] <= threshold) for i in range(n)]
    core = [len(nbrs) >= min_samples for nbrs in neighbor_sets]

    labels = [-1] * n
    cluster = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cluster
        frontier = [i]
        while frontier:
            p = frontier.pop()
            for q in neighbor_sets[p]:
                q = int(q)
                if labels[q] == -1:
                    labels[q] = cluster
                    if core[q]:
                        frontier.append(q)
        cluster += 1

    mapping: dict[str, str] = {}
    for label in range(cluster):
        members = [items[i] for i in range(n) if labels[i] == label]
        rep = min(members)
        for member in members:
            mapping[member] = rep
    for i in range(n):
        if labels[i] == -1:
            mapping[items[i]] = items[i]
    return mapping


@dataclass
class TagCanonicalizer:
    """Full tag cleaning pipeline: rule stage plus semantic merge map."""

    rule_stage: str = RULE_STAGE_ID
    semantic_threshold: float = DEFAULT_SEMANTIC_THRESHOLD
    canonical_map: dict[str, str] = field(default_factory=dict)
    lemmatizer: Callable[[str], str] | None = None

    def __post_init__(self):
        if not 0.0 < self.semantic_threshold < 1.0:
            raise ValidationError(
                f"semantic threshold must be in (0, 1), got {self.semantic_threshold}"
            )
        for src, dst in self.canonical_map.items():
            if self.canonical_map.get(dst, dst) != dst:
                raise ValidationError(
                    f"canonical map is not idempotent: {src!r} -> {dst!r} -> "
                    f"{self.canonical_map[dst]!r}"
                )

    def apply(self, raw_tag: str) -> str:
        normalized = normalize_rule(raw_tag, self.lemmatizer)
        return self.canonical_map.get(normalized, normalized)

    def apply_all(self, raw_tags: Iterable[str]) -> list[str]:
        """Canonical tags, empties dropped, deduplicated in first-seen order."""
        out: list[str] = []
        seen: set[str] = set()
        for raw in raw_tags:
            tag = self.apply(raw)
            if tag and tag not in seen:
                seen.add(tag)
                out.append(tag)
        return out


def build_canonicalizer(
    raw_tags: Iterable[str],
    tag_emb: EmbeddingTable | None,
    threshold: float = DEFAULT_SEMANTIC_THRESHOLD,
    lemmatizer: Callable[[str], str] | None = None,
) -> TagCanonicalizer:
    """Construct the canonicalizer for a raw tag vocabulary.

    Without tag embeddings the semantic stage is skipped (identity map).
    """
    normalized = {normalize_rule(t, lemmatizer) for t in raw_tags}
    normalized.discard("")
    canonical_map: dict[str, str] = {}
    if tag_emb is not None and normalized:
        canonical_map = semantic_aggregate(normalized, tag_emb, threshold)
    return TagCanonicalizer(
        semantic_threshold=threshold, canonical_map=canonical_map, lemmatizer=lemmatizer
    )


@dataclass(frozen=True)
class PoolEntry:
    task_id: str
    tags: tuple[str, ...]


class InstructionPool:
    """Cross-stage memory of previously seen instructions and tag frequencies."""

    def __init__(
        self,
        entries: Mapping[str, PoolEntry] | None = None,
        tasks: Iterable[str] | None = None,
    ):
        self.entries: dict[str, PoolEntry] = dict(entries or {})
        self.tasks: set[str] = set(tasks or ())
        self.freq: dict[str, int] = {}
        for entry in self.entries.values():
            for tag in entry.tags:
                self.freq[tag] = self.freq.get(tag, 0) + 1

    @property
    def total(self) -> int:
        return len(self.entries)

    def __contains__(self, instruction: str) -> bool:
        return nfc(instruction) in self.entries

    def instructions_for_task(self, task_id: str) -> list[str]:
        return [ins for ins, entry in self.entries.items() if entry.task_id == task_id]

    def copy(self) -> "InstructionPool":
        return InstructionPool(entries=self.entries, tasks=self.tasks)

    def to_json(self) -> dict:
        return {
            "entries": {
                ins: {"task_id": e.task_id, "tags": list(e.tags)}
                for ins, e in self.entries.items()
            },
            "total": self.total,
            "freq": dict(self.freq),
            "tasks": sorted(self.tasks),
        }

    @staticmethod
    def from_json(data: dict) -> "InstructionPool":
        entries = {
            ins: PoolEntry(task_id=e["task_id"], tags=tuple(e["tags"]))
            for ins, e in data.get("entries", {}).items()
        }
        pool = InstructionPool(entries=entries, tasks=data.get("tasks", ()))
        stored_freq = data.get("freq")
        if stored_freq is not None and stored_freq != pool.freq:
            raise ValidationError("instruction pool state file has inconsistent tag frequencies")
        stored_total = data.get("total")
        if stored_total is not None and stored_total != pool.total:
            raise ValidationError("instruction pool state file has inconsistent total")
        return pool

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(self.to_json(), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )

    @staticmethod
    def load(path: str | Path) -> "InstructionPool":
        path = Path(path)
        return InstructionPool.from_json(json.loads(path.read_text(encoding="utf-8")))


def insinfo(instruction: str, pool: InstructionPool) -> float:
    """Information score of a pooled instruction: sum of ln(N / f_t) over its tags."""
    key = nfc(instruction)
    entry = pool.entries.get(key)
    if entry is None:
        raise PoolLookupError(f"instruction not in pool: {instruction!r}")
    total = pool.total
    return float(sum(math.log(total / pool.freq[tag]) for tag in entry.tags))


def update_pool(
    pool: InstructionPool,
    task: TaskDataset,
    tags: TagTable,
    canon: TagCanonicalizer,
) -> InstructionPool:
    """Insert a task's distinct instructions into a copy of the pool.

    Returns a new pool; the input pool is untouched so scores can be
    compared before and after. Instructions with no tag row get an empty
    tag list. An instruction text already pooled by an earlier task is kept
    under that task (instruction identity is the text itself).
    """
    if task.task_id in pool.tasks:
        raise PoolStateError(f"task {task.task_id!r} already inserted into the pool")
    updated = pool.copy()
    updated.tasks.add(task.task_id)
    for instruction in task.histogram:
        if instruction in updated.entries:
            logger.warning(
                "instruction already pooled by task %r; keeping the original entry",
                updated.entries[instruction].task_id,
            )
            continue
        canonical = tuple(canon.apply_all(tags.tags_for(instruction)))
        updated.entries[instruction] = PoolEntry(task_id=task.task_id, tags=canonical)
        for tag in canonical:
            updated.freq[tag] = updated.freq.get(tag, 0) + 1
    return updated
