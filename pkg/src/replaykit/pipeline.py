"""Stage-by-stage orchestration with persisted cross-stage state.

State directory layout (one JSON file per concern, all writes are
deterministic given the same inputs and seed)::

    state_dir/
      ingest/train.jsonl        train split, corpus format
      ingest/holdout.jsonl      holdout split, corpus format
      ingest/summary.json       per-task sizes and instruction counts
      pool_stage_<i>.json       instruction pool after stage i
      stage_<i>/distances.json  {"stage", "mode", "method", "distances"}
      stage_<i>/plan.json       replay plan
      stage_<i>/augmented.jsonl current rows + replay rows (replay_of set)
      stages.json               {"completed": [...]}
      manifest.json             content hashes of every artifact (run only)

Stage ``i`` may only run once stages ``1..i-1`` have completed (their pool
snapshot is the planning input); rerunning a completed stage overwrites
its artifacts identically.
"""

import hashlib
import json
import logging
from pathlib import Path

from .baselines import build_baseline_stage
from .config import RunConfig
from .corpus import (
    EmbeddingTable,
    TagTable,
    TaskDataset,
    load_corpus,
    load_embeddings,
    load_tags,
    save_corpus,
    save_tags,
    split_holdout,
)
from .errors import SequencingError, ValidationError
from .evaluation import evaluate_run, load_bounds, load_predictions, write_plot_csv
from .replay import build_stage_dataset
from .taginfo import InstructionPool, build_canonicalizer, update_pool
from .transport import task_distance

logger = logging.getLogger(__name__)


def write_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    return path


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


class PipelineContext:
    """Loaded inputs for one config: splits, embeddings, tags, canonicalizer."""

    def __init__(self, config: RunConfig):
        self.config = config
        tasks = {t.task_id: t for t in load_corpus(config.corpus)}
        missing = [t for t in config.task_order if t not in tasks]
        if missing:
            raise ValidationError(f"task_order names tasks absent from the corpus: {missing}")
        self.train: dict[str, TaskDataset] = {}
        self.holdout: dict[str, TaskDataset] = {}
        for task_id in config.task_order:
            train, holdout = split_holdout(
                tasks[task_id], config.holdout_fraction, config.seed
            )
            self.train[task_id] = train
            self.holdout[task_id] = holdout
        self.embeddings: EmbeddingTable = load_embeddings(config.embeddings)
        for task_id in config.task_order:
            self.embeddings.require(self.train[task_id].histogram)
        if config.instance_embeddings_path == config.embeddings:
            self.instance_embeddings = self.embeddings
        else:
            self.instance_embeddings = load_embeddings(config.instance_embeddings_path)
        self.tags: TagTable = load_tags(config.tags) if config.tags else TagTable(rows={})
        tag_emb = load_embeddings(config.tag_embeddings) if config.tag_embeddings else None
        raw_vocab = [tag for tags in self.tags.rows.values() for tag in tags]
        self.canonicalizer = build_canonicalizer(
            raw_vocab, tag_emb, threshold=config.semantic_threshold
        )

    def check_stage(self, stage: int) -> None:
        if not 1 <= stage <= len(self.config.task_order):
            raise ValidationError(
                f"stage {stage} out of range 1..{len(self.config.task_order)}"
            )

    def stage_tasks(self, stage: int) -> tuple[TaskDataset, list[TaskDataset]]:
        self.check_stage(stage)
        order = self.config.task_order
        current = self.train[order[stage - 1]]
        previous = [self.train[t] for t in order[: stage - 1]]
        return current, previous

    def pool_before(self, stage: int) -> InstructionPool:
        """Pool holding the instructions of stages 1..stage-1."""
        self.check_stage(stage)
        if stage == 1:
            return InstructionPool()
        pool_path = self.config.state_dir / f"pool_stage_{stage - 1}.json"
        if not pool_path.exists():
            raise SequencingError(
                f"stage {stage} requires completed stages 1..{stage - 1}; "
                f"missing state file {pool_path}"
            )
        return InstructionPool.load(pool_path)


def _completed_stages(state_dir: Path) -> set[int]:
    stages_path = state_dir / "stages.json"
    if not stages_path.exists():
        return set()
    data = json.loads(stages_path.read_text(encoding="utf-8"))
    return set(data.get("completed", []))


def ingest(config: RunConfig) -> dict:
    """Validate inputs, materialize the train/holdout splits, write a summary."""
    ctx = PipelineContext(config)
    ingest_dir = config.state_dir / "ingest"
    train_rows = save_corpus(
        (ctx.train[t] for t in config.task_order), ingest_dir / "train.jsonl"
    )
    holdout_rows = save_corpus(
        (ctx.holdout[t] for t in config.task_order), ingest_dir / "holdout.jsonl"
    )
    summary = {
        "tasks": [
            {
                "task_id": t,
                "train_rows": ctx.train[t].size,
                "holdout_rows": ctx.holdout[t].size,
                "distinct_instructions": len(ctx.train[t].histogram),
            }
            for t in config.task_order
        ],
        "train_rows": train_rows,
        "holdout_rows": holdout_rows,
        "embedding_dim": ctx.embeddings.dim,
        "tagged_instructions": len(ctx.tags.rows),
    }
    write_json(ingest_dir / "summary.json", summary)
    return summary


def stage_distances(config: RunConfig, stage: int, ctx: PipelineContext | None = None) -> dict:
    """Transport distances from every previous task to the stage's task."""
    ctx = ctx or PipelineContext(config)
    current, previous = ctx.stage_tasks(stage)
    distances = {
        prev.task_id: task_distance(
            prev,
            current,
            ctx.embeddings,
            mode=config.mode,
            method=config.method,
            epsilon=config.epsilon,
            tol=config.tol,
            max_iter=config.max_iter,
        )
        for prev in previous
    }
    return {
        "stage": stage,
        "mode": config.mode,
        "method": config.method,
        "distances": distances,
    }


def stage_plan(
    config: RunConfig,
    stage: int,
    strategy: str | None = None,
    seed: int | None = None,
    ctx: PipelineContext | None = None,
):
    """Replay plan and augmented instances for one stage under one strategy."""
    ctx = ctx or PipelineContext(config)
    strategy = strategy or config.strategy
    seed = config.seed if seed is None else seed
    current, previous = ctx.stage_tasks(stage)
    if strategy == "inscl":
        pool = ctx.pool_before(stage)
        augmented, plan = build_stage_dataset(
            current,
            previous,
            ctx.embeddings,
            pool,
            alpha_per_task=config.alpha_per_task,
            mode=config.mode,
            method=config.method,
            seed=seed,
            epsilon=config.epsilon,
            tol=config.tol,
            max_iter=config.max_iter,
        )
    else:
        emb = ctx.instance_embeddings if strategy == "proto-data" else ctx.embeddings
        augmented, plan = build_baseline_stage(
            strategy,
            current,
            previous,
            emb,
            alpha_per_task=config.alpha_per_task,
            seed=seed,
        )
    return plan, augmented


def run_stage(config: RunConfig, stage: int, ctx: PipelineContext | None = None) -> dict:
    """Execute one stage: distances, plan, augmented dataset, pool update."""
    ctx = ctx or PipelineContext(config)
    ctx.check_stage(stage)
    completed = _completed_stages(config.state_dir)
    missing = [i for i in range(1, stage) if i not in completed]
    if missing:
        raise SequencingError(f"stage {stage} requires completed stages {missing}")

    stage_dir = config.state_dir / f"stage_{stage}"
    distances_payload = stage_distances(config, stage, ctx=ctx)
    write_json(stage_dir / "distances.json", distances_payload)

    plan, augmented = stage_plan(config, stage, ctx=ctx)
    write_json(stage_dir / "plan.json", plan.to_json())
    save_corpus(augmented, stage_dir / "augmented.jsonl")

    pool = ctx.pool_before(stage)
    current, _ = ctx.stage_tasks(stage)
    pool = update_pool(pool, current, ctx.tags, ctx.canonicalizer)
    pool.save(config.state_dir / f"pool_stage_{stage}.json")

    completed.add(stage)
    write_json(config.state_dir / "stages.json", {"completed": sorted(completed)})
    return {
        "stage": stage,
        "strategy": plan.strategy,
        "replay_rows": len(plan.sampled_ids),
        "augmented_rows": len(augmented),
        "pool_size": pool.total,
        "artifacts": [
            str(stage_dir / "distances.json"),
            str(stage_dir / "plan.json"),
            str(stage_dir / "augmented.jsonl"),
            str(config.state_dir / f"pool_stage_{stage}.json"),
        ],
    }


def run_all(config: RunConfig) -> dict:
    """Run ingest plus every stage in task order; emit the artifact manifest."""
    ctx = PipelineContext(config)
    ingest(config)
    results = [run_stage(config, stage, ctx=ctx) for stage in range(1, len(config.task_order) + 1)]
    artifacts: dict[str, str] = {}
    for path in sorted(config.state_dir.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            artifacts[path.relative_to(config.state_dir).as_posix()] = _sha256(path)
    manifest = {
        "task_order": config.task_order,
        "strategy": config.strategy,
        "seed": config.seed,
        "stages": [
            {k: r[k] for k in ("stage", "replay_rows", "augmented_rows", "pool_size")}
            for r in results
        ],
        "artifacts": artifacts,
    }
    write_json(config.state_dir / "manifest.json", manifest)
    return manifest


def evaluate(
    config: RunConfig,
    predictions_path: str | Path,
    report_path: str | Path | None = None,
    csv_path: str | Path | None = None,
) -> dict:
    """Score prediction files against the holdout split and the upper bounds."""
    if config.bounds is None:
        raise ValidationError("config paths.bounds is required for evaluation")
    ctx = PipelineContext(config)
    predictions = load_predictions(predictions_path)
    bounds = load_bounds(config.bounds)
    report = evaluate_run(
        predictions,
        [ctx.holdout[t] for t in config.task_order],
        bounds,
        config.task_order,
    )
    payload = report.to_json()
    payload["method"] = config.strategy
    if report.missing_predictions:
        logger.warning(
            "%d holdout instances had no prediction and scored 0",
            report.missing_predictions,
        )
    if report_path is None:
        report_path = config.state_dir / "eval" / "report.json"
    write_json(report_path, payload)
    if csv_path is not None:
        write_plot_csv(report, config.strategy, csv_path)
    return payload


def normalize_tags(
    tags_path: str | Path,
    tag_embeddings_path: str | Path | None,
    out_tags: str | Path,
    out_map: str | Path,
    threshold: float = 0.1,
) -> dict:
    """Canonicalize a raw tag table; write the cleaned table and the merge map."""
    table = load_tags(tags_path)
    tag_emb = load_embeddings(tag_embeddings_path) if tag_embeddings_path else None
    raw_vocab = [tag for tags in table.rows.values() for tag in tags]
    canon = build_canonicalizer(raw_vocab, tag_emb, threshold=threshold)
    cleaned = TagTable(
        rows={key: canon.apply_all(tags) for key, tags in table.rows.items()}
    )
    save_tags(cleaned, out_tags)
    payload = {
        "rule_stage": canon.rule_stage,
        "semantic_threshold": canon.semantic_threshold,
        "map": canon.canonical_map,
    }
    write_json(out_map, payload)
    return {
        "instructions": len(cleaned.rows),
        "raw_tags": len(set(raw_vocab)),
        "canonical_tags": len({t for tags in cleaned.rows.values() for t in tags}),
        "merged": sum(1 for k, v in canon.canonical_map.items() if k != v),
    }
