import numpy as np
import pytest

from replaykit.corpus import EmbeddingTable, Instance, TaskDataset


def build_task(task_id: str, spec: list[tuple[str, int]]) -> TaskDataset:
    """Task with the given (instruction, count) multiset and sequential ids."""
    instances = []
    counter = 0
    for instruction, count in spec:
        for _ in range(count):
            counter += 1
            instances.append(
                Instance(
                    id=f"{task_id}#{counter}",
                    task_id=task_id,
                    instruction=instruction,
                    input=f"input {counter}",
                    output=f"output {counter}",
                )
            )
    return TaskDataset.from_instances(task_id, instances)


def gaussian_table(keys, dim: int = 16, seed: int = 0) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    return EmbeddingTable(dim=dim, rows={k: rng.normal(size=dim) for k in keys})


@pytest.fixture
def task_factory():
    return build_task


@pytest.fixture
def embedding_factory():
    return gaussian_table
