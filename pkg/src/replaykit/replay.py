"""Dynamic replay: distance-proportional budgets and information-guided sampling.

When stage ``i`` trains, a total replay budget of ``(i - 1) * alpha``
rows is split across the previous tasks proportionally to their transport
distance from the current task (more different tasks replay more). Within
each task, per-instruction quotas follow the instructions' information
scores, and each quota is filled uniformly without replacement from that
instruction's instances.

All integerization uses largest-remainder rounding over exact rational
shares: floor everything, then hand leftover units to the largest
fractional parts, breaking ties toward the lexicographically smaller key.
The rational arithmetic makes budgets exactly invariant to rescaling the
weights.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction

from .corpus import EmbeddingTable, Instance, TaskDataset
from .errors import ValidationError
from .rng import rng_for
from .taginfo import InstructionPool, insinfo
from .transport import task_distance

logger = logging.getLogger(__name__)


def largest_remainder(weights: dict[str, Fraction], budget: int) -> dict[str, int]:
    """Integerize proportional shares so they sum to ``budget`` exactly."""
    total = sum(weights.values())
    if total <= 0:
        raise ValidationError("largest_remainder requires positive total weight")
    shares = {key: Fraction(w) * budget / total for key, w in weights.items()}
    alloc = {key: int(share) for key, share in shares.items()}
    leftover = budget - sum(alloc.values())
    remainders = sorted(
        ((share - alloc[key], key) for key, share in shares.items()),
        key=lambda item: (-item[0], item[1]),
    )
    for _, key in remainders[:leftover]:
        alloc[key] += 1
    return alloc


def proportional_allocate(
    weights: dict[str, float],
    budget: int,
    capacities: dict[str, int] | None = None,
) -> dict[str, int]:
    """Largest-remainder allocation, optionally capped by per-key capacity.

    Surplus from capped keys is redistributed among the remaining keys by
    the same rule until the budget is met or every key is exhausted.
    All-zero weights fall back to an equal split.
    """
    if budget < 0:
        raise ValidationError(f"budget must be nonnegative, got {budget}")
    if any(w < 0 for w in weights.values()):
        raise ValidationError("weights must be nonnegative")
    alloc = {key: 0 for key in weights}
    if not weights or budget == 0:
        return alloc
    fr_weights = {key: Fraction(w) for key, w in weights.items()}
    if sum(fr_weights.values()) == 0:
        fr_weights = {key: Fraction(1) for key in weights}
    remaining = budget
    while remaining > 0:
        active = {
            key: w
            for key, w in fr_weights.items()
            if w > 0 and (capacities is None or alloc[key] < capacities[key])
        }
        if not active and capacities is not None:
            active = {
                key: Fraction(1) for key in weights if alloc[key] < capacities[key]
            }
        if not active:
            break
        round_alloc = largest_remainder(active, remaining)
        progressed = False
        for key, units in round_alloc.items():
            if capacities is not None:
                units = min(units, capacities[key] - alloc[key])
            if units > 0:
                alloc[key] += units
                remaining -= units
                progressed = True
        if not progressed:
            break
    return alloc


def allocate_budgets(distances: dict[str, float], total_budget: int) -> dict[str, int]:
    """Split the stage budget across previous tasks proportionally to distance.

    Zero-distance tasks receive zero (their knowledge is assumed retained);
    if every distance is zero the budget falls back to an equal split with
    a warning. An empty distance map yields an empty plan.
    """
    if total_budget <= 0:
        raise ValidationError(f"total_budget must be positive, got {total_budget}")
    if not distances:
        return {}
    if any(d < 0 for d in distances.values()):
        raise ValidationError("distances must be nonnegative")
    if all(d == 0 for d in distances.values()):
        logger.warning(
            "all task distances are zero; falling back to an equal budget split"
        )
        return largest_remainder({k: Fraction(1) for k in distances}, total_budget)
    return largest_remainder(
        {k: Fraction(d) for k, d in distances.items()}, total_budget
    )


@dataclass
class ReplayPlan:
    """Per-task budgets, per-instruction quotas, and the sampled instance ids."""

    stage: int
    total_budget: int
    task_budgets: dict[str, int] = field(default_factory=dict)
    instruction_quotas: dict[str, dict[str, int]] = field(default_factory=dict)
    sampled_ids: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    strategy: str = "inscl"

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "strategy": self.strategy,
            "total_budget": self.total_budget,
            "task_budgets": self.task_budgets,
            "instruction_quotas": self.instruction_quotas,
            "sampled_ids": self.sampled_ids,
            "notes": self.notes,
        }


def insinfo_sample(
    task: TaskDataset, budget: int, pool: InstructionPool, seed: int
) -> list[str]:
    """Sample instance ids from one task, weighted by instruction information.

    Quotas are proportional to each instruction's share of the task's total
    score (uniform when all scores are zero), capped by availability with
    surplus redistributed. Each quota is filled uniformly without
    replacement, seeded.
    """
    ids, _ = _insinfo_sample_with_quotas(task, budget, pool, seed)
    return ids


def _insinfo_sample_with_quotas(
    task: TaskDataset, budget: int, pool: InstructionPool, seed: int
) -> tuple[list[str], dict[str, int]]:
    if budget < 0:
        raise ValidationError(f"budget must be nonnegative, got {budget}")
    if budget > task.size:
        logger.warning(
            "budget %d exceeds task %r size %d; clamping", budget, task.task_id, task.size
        )
        budget = task.size
    buckets = task.instances_by_instruction()
    if budget == 0 or not buckets:
        return [], {ins: 0 for ins in buckets}
    scores = {ins: insinfo(ins, pool) for ins in buckets}
    capacities = {ins: len(insts) for ins, insts in buckets.items()}
    quotas = proportional_allocate(scores, budget, capacities)

    rng = rng_for(seed, "insinfo-sample", task.task_id)
    sampled: list[str] = []
    for instruction in task.histogram:
        quota = quotas[instruction]
        if quota == 0:
            continue
        bucket_ids = [inst.id for inst in buckets[instruction]]
        picks = rng.choice(len(bucket_ids), size=quota, replace=False)
        sampled.extend(bucket_ids[i] for i in picks)
    return sampled, quotas


def build_stage_dataset(
    current: TaskDataset,
    previous: list[TaskDataset],
    emb: EmbeddingTable,
    pool: InstructionPool,
    alpha_per_task: int,
    mode: str = "real",
    method: str = "exact",
    seed: int = 0,
    epsilon: float | None = None,
    tol: float = 1e-9,
    max_iter: int = 10000,
) -> tuple[list[Instance], ReplayPlan]:
    """Assemble the augmented dataset for one training stage.

    Stage 1 (no previous tasks) returns the current data and an empty plan.
    Later stages split a total budget of ``(stage - 1) * alpha_per_task``
    across previous tasks by transport distance, sample each task's share
    by information score, and append the replay rows after the current
    task's rows in (task order, sampled order). Fully deterministic under
    the seed.
    """
    if alpha_per_task <= 0:
        raise ValidationError(f"alpha_per_task must be positive, got {alpha_per_task}")
    stage = len(previous) + 1
    plan = ReplayPlan(stage=stage, total_budget=0)
    if not previous:
        return list(current.instances), plan

    plan.total_budget = (stage - 1) * alpha_per_task
    distances = {
        prev.task_id: task_distance(
            prev, current, emb, mode=mode, method=method,
            epsilon=epsilon, tol=tol, max_iter=max_iter,
        )
        for prev in previous
    }
    capacities = {prev.task_id: prev.size for prev in previous}
    if all(d == 0 for d in distances.values()):
        logger.warning(
            "all task distances are zero at stage %d; falling back to an equal split",
            stage,
        )
        plan.notes.append("all distances zero; equal split fallback")
        weights = {k: 1.0 for k in distances}
    else:
        weights = distances
    budgets = proportional_allocate(weights, plan.total_budget, capacities)
    uncapped = allocate_budgets(weights, plan.total_budget)
    for task_id, want in uncapped.items():
        if want > capacities[task_id]:
            plan.notes.append(
                f"task {task_id}: budget {want} exceeds size {capacities[task_id]}; "
                f"clamped, surplus redistributed"
            )
    if sum(budgets.values()) < plan.total_budget:
        plan.notes.append(
            f"previous tasks hold only {sum(capacities.values())} rows; "
            f"total replay clamped from {plan.total_budget}"
        )

    plan.task_budgets = {prev.task_id: budgets[prev.task_id] for prev in previous}
    replayed: list[Instance] = []
    for prev in previous:
        by_id = {inst.id: inst for inst in prev.instances}
        ids, quotas = _insinfo_sample_with_quotas(
            prev, budgets[prev.task_id], pool, seed
        )
        plan.instruction_quotas[prev.task_id] = {
            ins: q for ins, q in quotas.items() if q > 0
        }
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
