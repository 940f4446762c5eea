"""Baseline replay strategies sharing the dynamic-replay budget protocol.

* random: uniform sampling without replacement from each previous task.
* proto-data: k-means over instance embeddings (k = number of distinct
  instructions); instances sorted by descending cosine distance from their
  own center, top-budget kept.
* proto-instruction: k-means over instruction embeddings with k chosen by
  the best mean silhouette; the instruction nearest each center is
  prototypical, and the budget is filled from instances bearing those
  instructions.
* diverse: the previous-task instruction whose cosine-similarity column sum
  against the current task's instructions is smallest is the most diverse;
  its instances fill the budget, topping up from the next-least columns.

All clustering uses cosine distance, consistent with the transport cost.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .corpus import EmbeddingTable, Instance, TaskDataset, instance_key
from .errors import ValidationError
from .rng import rng_for
from .replay import ReplayPlan, proportional_allocate

logger = logging.getLogger(__name__)

STRATEGIES = ("inscl", "random", "proto-data", "proto-instruction", "diverse")


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValidationError("cannot cluster all-zero vectors")
    return vectors / norms


@dataclass
class ClusterModel:
    """A fitted k-means model over cosine geometry."""

    k: int
    centers: np.ndarray
    assignment: dict[str, int]
    objective: float
    objective_trace: list[float]


def fit_kmeans(
    items: list[str],
    vectors: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> ClusterModel:
    """Seeded k-means++ under cosine distance.

    Points and centers live on the unit sphere (centers are normalized
    means of their members), which keeps the objective, the sum of
    within-cluster cosine distances, non-increasing across iterations.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if k > len(items):
        raise ValidationError(f"k={k} exceeds number of items {len(items)}")
    points = _unit_rows(np.asarray(vectors, dtype=np.float64))
    n = len(items)
    rng = rng_for(seed, "kmeans", k)

    # k-means++ seeding with squared cosine distance weights
    center_idx = [int(rng.integers(n))]
    for _ in range(1, k):
        dist = np.min(
            np.stack([1.0 - points @ points[c] for c in center_idx]), axis=0
        )
        dist = np.clip(dist, 0.0, None) ** 2
        total = dist.sum()
        if total == 0:
            remaining = [i for i in range(n) if i not in center_idx]
            center_idx.append(remaining[int(rng.integers(len(remaining)))])
            continue
        center_idx.append(int(rng.choice(n, p=dist / total)))
    centers = points[center_idx].copy()

    labels = np.zeros(n, dtype=int)
    trace: list[float] = []
    prev_objective = np.inf
    for _ in range(max_iter):
        dists = 1.0 - points @ centers.T
        labels = np.argmin(dists, axis=1)
        objective = float(dists[np.arange(n), labels].sum())
        trace.append(objective)
        for c in range(k):
            members = points[labels == c]
            if len(members) == 0:
                # reseed an empty cluster at the point farthest from its center
                worst = int(np.argmax(dists[np.arange(n), labels]))
                centers[c] = points[worst]
                continue
            mean = members.mean(axis=0)
            norm = np.linalg.norm(mean)
            if norm > 0:
                centers[c] = mean / norm
        if prev_objective - objective <= tol:
            break
        prev_objective = objective

    dists = 1.0 - points @ centers.T
    labels = np.argmin(dists, axis=1)
    objective = float(dists[np.arange(n), labels].sum())
    trace.append(objective)
    return ClusterModel(
        k=k,
        centers=centers,
        assignment={item: int(label) for item, label in zip(items, labels)},
        objective=objective,
        objective_trace=trace,
    )


def mean_silhouette(vectors: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette under cosine distance; singleton clusters score 0."""
    points = _unit_rows(np.asarray(vectors, dtype=np.float64))
    n = len(points)
    dist = np.clip(1.0 - points @ points.T, 0.0, 2.0)
    scores = np.zeros(n)
    unique = np.unique(labels)
    for i in range(n):
        own = labels[i]
        own_mask = labels == own
        if own_mask.sum() == 1:
            scores[i] = 0.0
            continue
        a = dist[i][own_mask & (np.arange(n) != i)].mean()
        b = min(
            dist[i][labels == other].mean() for other in unique if other != own
        )
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())


def random_replay(task: TaskDataset, budget: int, seed: int) -> list[str]:
    """Uniform sample of instance ids without replacement, clamped to the task."""
    if budget < 0:
        raise ValidationError(f"budget must be nonnegative, got {budget}")
    take = min(budget, task.size)
    if take < budget:
        logger.warning(
            "budget %d exceeds task %r size %d; clamping", budget, task.task_id, task.size
        )
    if take == 0:
        return []
    rng = rng_for(seed, "random-replay", task.task_id)
    picks = rng.choice(task.size, size=take, replace=False)
    return [task.instances[i].id for i in picks]


def prototype_data(
    task: TaskDataset, budget: int, emb: EmbeddingTable, seed: int
) -> list[str]:
    """Instances farthest from their k-means center, k = distinct instructions.

    Requires instance-level embeddings keyed by ``instruction + "\\n" + input``.
    """
    take = min(budget, task.size)
    if take == 0:
        return []
    ids = [inst.id for inst in task.instances]
    vectors = np.stack([emb.lookup(instance_key(inst)) for inst in task.instances])
    k = min(len(task.histogram), task.size)
    model = fit_kmeans(ids, vectors, k, seed)
    points = _unit_rows(vectors)
    scores = {
        inst_id: float(1.0 - points[i] @ model.centers[model.assignment[inst_id]])
        for i, inst_id in enumerate(ids)
    }
    ordered = sorted(ids, key=lambda inst_id: (-scores[inst_id], inst_id))
    return ordered[:take]


def _fill_uniform(
    candidate_pools: list[list[Instance]], budget: int, rng: np.random.Generator
) -> list[str]:
    """Draw uniformly without replacement from each pool in order until full."""
    chosen: list[str] = []
    for pool in candidate_pools:
        if len(chosen) >= budget:
            break
        want = min(budget - len(chosen), len(pool))
        if want == 0:
            continue
        picks = rng.choice(len(pool), size=want, replace=False)
        chosen.extend(pool[i].id for i in picks)
    return chosen


def prototype_instruction(
    task: TaskDataset, budget: int, emb: EmbeddingTable, seed: int
) -> list[str]:
    """Replay instances whose instructions are closest to their cluster centers.

    k is chosen over [2, min(10, n_instructions - 1)] by the best mean
    silhouette (k = 2 forced for two instructions; a single instruction is
    trivially prototypical). If the prototypical instances cannot fill the
    budget, the remainder is drawn uniformly from the rest of the task.
    """
    take = min(budget, task.size)
    if take == 0:
        return []
    instructions = task.instructions()
    rng = rng_for(seed, "prototype-instruction", task.task_id)
    if len(instructions) == 1:
        prototypical = set(instructions)
    else:
        vectors = np.stack([emb.lookup(ins) for ins in instructions])
        if len(instructions) == 2:
            candidate_ks = [2]
        else:
            candidate_ks = list(range(2, min(10, len(instructions) - 1) + 1))
        best_k, best_score, best_model = None, -np.inf, None
        for k in candidate_ks:
            model = fit_kmeans(instructions, vectors, k, seed)
            labels = np.array([model.assignment[ins] for ins in instructions])
            score = mean_silhouette(vectors, labels)
            if score > best_score:
                best_k, best_score, best_model = k, score, model
        assert best_model is not None and best_k is not None
        points = _unit_rows(vectors)
        prototypical = set()
        for c in range(best_k):
            members = [
                (float(1.0 - points[i] @ best_model.centers[c]), instructions[i])
                for i in range(len(instructions))
                if best_model.assignment[instructions[i]] == c
            ]
            if members:
                prototypical.add(min(members)[1])
    buckets = task.instances_by_instruction()
    primary = [inst for ins in task.histogram if ins in prototypical for inst in buckets[ins]]
    rest = [inst for ins in task.histogram if ins not in prototypical for inst in buckets[ins]]
    return _fill_uniform([primary, rest], take, rng)


def diverse_instruction(
    task: TaskDataset,
    budget: int,
    current_instructions: list[str],
    emb: EmbeddingTable,
    seed: int,
) -> list[str]:
    """Replay instances of the instructions most unlike the current task's.

    Columns of the cosine-similarity matrix (rows = current instructions)
    are ranked by ascending sum; buckets are drawn in that order.
    """
    if not current_instructions:
        raise ValidationError("diverse_instruction requires current-task instructions")
    take = min(budget, task.size)
    if take == 0:
        return []
    prev_instructions = task.instructions()
    cur = _unit_rows(np.stack([emb.lookup(ins) for ins in current_instructions]))
    prev = _unit_rows(np.stack([emb.lookup(ins) for ins in prev_instructions]))
    column_sums = (cur @ prev.T).sum(axis=0)
    order = sorted(range(len(prev_instructions)), key=lambda j: (column_sums[j], j))
    buckets = task.instances_by_instruction()
    pools = [buckets[prev_instructions[j]] for j in order]
    rng = rng_for(seed, "diverse-instruction", task.task_id)
    return _fill_uniform(pools, take, rng)


def build_baseline_stage(
    strategy: str,
    current: TaskDataset,
    previous: list[TaskDataset],
    emb: EmbeddingTable,
    alpha_per_task: int,
    seed: int,
) -> tuple[list[Instance], ReplayPlan]:
    """Stage assembly for the baseline strategies under the shared protocol.

    The total budget ``(stage - 1) * alpha_per_task`` is split equally
    across previous tasks (capacity-aware), mirroring the per-task alpha of
    the original strategies while keeping totals comparable.
    """
    if strategy not in STRATEGIES or strategy == "inscl":
        raise ValidationError(f"unknown baseline strategy {strategy!r}")
    if alpha_per_task <= 0:
        raise ValidationError(f"alpha_per_task must be positive, got {alpha_per_task}")
    stage = len(previous) + 1
    plan = ReplayPlan(stage=stage, total_budget=0, strategy=strategy)
    if not previous:
        return list(current.instances), plan
    plan.total_budget = (stage - 1) * alpha_per_task
    capacities = {prev.task_id: prev.size for prev in previous}
    budgets = proportional_allocate(
        {prev.task_id: 1.0 for prev in previous}, plan.total_budget, capacities
    )
    if sum(budgets.values()) < plan.total_budget:
        plan.notes.append(
            f"previous tasks hold only {sum(capacities.values())} rows; "
            f"total replay clamped from {plan.total_budget}"
        )
    plan.task_budgets = dict(budgets)

    replayed: list[Instance] = []
    for prev in previous:
        budget = budgets[prev.task_id]
        if strategy == "random":
            ids = random_replay(prev, budget, seed)
        elif strategy == "proto-data":
            ids = prototype_data(prev, budget, emb, seed)
        elif strategy == "proto-instruction":
            ids = prototype_instruction(prev, budget, emb, seed)
        else:
            ids = diverse_instruction(
                prev, budget, current.instructions(), emb, seed
            )
        by_id = {inst.id: inst for inst in prev.instances}
        quotas: dict[str, int] = {}
        for inst_id in ids:
            ins = by_id[inst_id].instruction
            quotas[ins] = quotas.get(ins, 0) + 1
        plan.instruction_quotas[prev.task_id] = quotas
        plan.sampled_ids.extend(ids)
        replayed.extend(by_id[i] for i in ids)

    augmented = list(current.instances) + [
        Instance(
            id=inst.id,
            task_id=inst.task_id,
            instruction=inst.instruction,
            input=inst.input,
            output=inst.output,
            replay_of=inst.task_id,
        )
        for inst in replayed
    ]
    return augmented, plan
