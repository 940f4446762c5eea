"""Scoring a continual-tuning run: Rouge-L, relative gain, forgetting rate.

Rouge-L here is the sentence-level F1 variant (beta = 1): tokens are
lowercased, punctuation is split off as separate tokens, precision and
recall come from the longest common subsequence. Relative gain at a stage
is the mean, over the tasks trained before it, of the task's current
Rouge-L divided by its single-task upper bound, times 100; stage 1 is 100
by convention. The forgetting rate of a task is the relative drop from its
post-training score to its score after the final stage.
"""

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import TaskDataset, nfc
from .errors import ParseError, ValidationError

ROUGE_VARIANT = "rouge-l sentence-level F1 (beta=1), lowercase, punctuation split off"

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _lcs_length(xs: list[str], ys: list[str]) -> int:
    if not xs or not ys:
        return 0
    prev = [0] * (len(ys) + 1)
    for x in xs:
        cur = [0] * (len(ys) + 1)
        for j, y in enumerate(ys, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> float:
    """Rouge-L F1 between candidate and reference; 0 when either is empty."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class StageResult:
    """Mean Rouge-L per task at one training stage (tasks trained so far)."""

    stage: int
    scores: dict[str, float]


def relative_gain(stage: StageResult, bounds: dict[str, float]) -> float:
    """Mean over previous tasks of score/upper_bound, as a percentage.

    ``stage.scores`` must contain exactly the tasks trained before this
    stage. Stage 1 is 100 by convention.
    """
    if stage.stage < 1:
        raise ValidationError(f"stage index must be >= 1, got {stage.stage}")
    if stage.stage == 1:
        return 100.0
    if not stage.scores:
        raise ValidationError(f"stage {stage.stage} has no previous-task scores")
    ratios = []
    for task_id, score in stage.scores.items():
        if task_id not in bounds:
            raise ValidationError(f"no upper bound for task {task_id!r}")
        bound = bounds[task_id]
        if bound <= 0:
            raise ValidationError(f"upper bound for task {task_id!r} must be positive")
        ratios.append(score / bound)
    return 100.0 * sum(ratios) / len(ratios)


def forgetting_rate(initial: float, final: float) -> float:
    """Relative drop (percent) from a task's initial score to its final score.

    Negative values mean backward transfer and are reported as-is.
    """
    if initial <= 0:
        raise ValidationError(f"initial score must be positive, got {initial}")
    return (initial - final) / initial * 100.0


@dataclass
class EvalReport:
    rouge_variant: str
    stages: list[dict] = field(default_factory=list)
    relative_gain_curve: list[float] = field(default_factory=list)
    forgetting: dict[str, float] = field(default_factory=dict)
    avg_relative_gain: float = 0.0
    std_relative_gain: float = 0.0
    scored_instances: int = 0
    missing_predictions: int = 0

    def to_json(self) -> dict:
        return {
            "rouge_variant": self.rouge_variant,
            "stages": self.stages,
            "relative_gain_curve": self.relative_gain_curve,
            "forgetting": self.forgetting,
            "avg_relative_gain": self.avg_relative_gain,
            "std_relative_gain": self.std_relative_gain,
            "coverage": {
                "scored_instances": self.scored_instances,
                "missing_predictions": self.missing_predictions,
            },
        }


def load_predictions(path: str | Path) -> dict[tuple[int, str, str], str]:
    """Load JSONL predictions keyed by (stage, task_id, instance id)."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"prediction file not found: {path}")
    out: dict[tuple[int, str, str], str] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
            for fieldname in ("stage", "task_id", "id", "output"):
                if fieldname not in record:
                    raise ParseError(f"{path}:{lineno}: missing field {fieldname!r}")
            out[(int(record["stage"]), record["task_id"], record["id"])] = nfc(
                str(record["output"])
            )
    return out


def load_bounds(path: str | Path) -> dict[str, float]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"bounds file not found: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: bounds must be a JSON object")
    bounds = {}
    for task_id, value in data.items():
        value = float(value)
        if not 0.0 < value <= 1.0:
            raise ValidationError(
                f"{path}: bound for {task_id!r} must be in (0, 1], got {value}"
            )
        bounds[task_id] = value
    return bounds


def evaluate_run(
    predictions: dict[tuple[int, str, str], str],
    holdout: list[TaskDataset],
    bounds: dict[str, float],
    task_order: list[str],
) -> EvalReport:
    """Score every stage of a run against the holdout references.

    At stage ``i`` the tasks ``task_order[:i]`` are expected to have
    predictions for each of their holdout instances; a missing prediction
    scores 0 and is counted in the coverage warning. The per-task scores at
    each stage feed the relative-gain curve (previous tasks only) and the
    forgetting rates (initial = at the task's own stage, final = last stage).
    """
    by_task = {task.task_id: task for task in holdout}
    for task_id in task_order:
        if task_id not in by_task:
            raise ValidationError(f"task {task_id!r} missing from the holdout corpus")

    report = EvalReport(rouge_variant=ROUGE_VARIANT)
    stage_scores: dict[int, dict[str, float]] = {}
    for i, _ in enumerate(task_order, start=1):
        scores: dict[str, float] = {}
        for task_id in task_order[:i]:
            task = by_task[task_id]
            values = []
            for inst in task.instances:
                key = (i, task_id, inst.id)
                if key in predictions:
                    values.append(rouge_l(predictions[key], inst.output))
                    report.scored_instances += 1
                else:
                    values.append(0.0)
                    report.missing_predictions += 1
            scores[task_id] = sum(values) / len(values) if values else 0.0
        stage_scores[i] = scores
        previous_only = {t: s for t, s in scores.items() if t != task_order[i - 1]}
        gain = relative_gain(StageResult(stage=i, scores=previous_only), bounds)
        report.relative_gain_curve.append(gain)
        report.stages.append({"stage": i, "scores": scores, "relative_gain": gain})

    final_stage = len(task_order)
    for stage_idx, task_id in enumerate(task_order, start=1):
        initial = stage_scores[stage_idx][task_id]
        final = stage_scores[final_stage][task_id]
        if initial > 0:
            report.forgetting[task_id] = forgetting_rate(initial, final)

    curve = report.relative_gain_curve
    report.avg_relative_gain = sum(curve) / len(curve)
    mean = report.avg_relative_gain
    report.std_relative_gain = (sum((g - mean) ** 2 for g in curve) / len(curve)) ** 0.5
    return report


def write_plot_csv(report: EvalReport, method: str, path: str | Path) -> None:
    """Plot-friendly CSV: one (stage, method, relative_gain) row per stage."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "method", "relative_gain"])
        for i, gain in enumerate(report.relative_gain_curve, start=1):
            writer.writerow([i, method, gain])
