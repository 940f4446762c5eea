"""Command-line interface; a thin client over the pipeline functions.

Exit codes: 0 success, 2 validation errors (bad files, bad values,
config/corpus mismatches), 3 sequencing errors (a stage run before its
predecessors).
"""

import json
import logging
import sys
from pathlib import Path

import click

from . import pipeline
from .config import load_run_config
from .corpus import save_corpus
from .errors import ReplaykitError, SequencingError, ValidationError

EXIT_VALIDATION = 2
EXIT_SEQUENCING = 3


def _fail(exc: ReplaykitError) -> None:
    click.echo(f"error: {exc}", err=True)
    if isinstance(exc, SequencingError):
        sys.exit(EXIT_SEQUENCING)
    if isinstance(exc, ValidationError):
        sys.exit(EXIT_VALIDATION)
    sys.exit(EXIT_VALIDATION)


def _echo_json(payload: dict) -> None:
    click.echo(json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2))


@click.group()
def main():
    """Replay curation for continual instruction tuning."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


config_option = click.option(
    "--config", "config_path", required=True, type=click.Path(), help="Run config JSON."
)
seed_option = click.option("--seed", type=int, default=None, help="Override the config seed.")
strategy_option = click.option(
    "--strategy",
    type=click.Choice(["inscl", "random", "proto-data", "proto-instruction", "diverse"]),
    default=None,
    help="Override the config strategy.",
)


@main.command()
@config_option
@seed_option
def ingest(config_path, seed):
    """Load and validate the corpus; write train/holdout splits."""
    try:
        config = load_run_config(config_path, seed=seed)
        _echo_json(pipeline.ingest(config))
    except ReplaykitError as exc:
        _fail(exc)


@main.command()
@config_option
@click.option("--stage", required=True, type=int)
@click.option("--out", "out_path", type=click.Path(), default=None)
@seed_option
def distances(config_path, stage, out_path, seed):
    """Transport distances from previous tasks to the stage's task."""
    try:
        config = load_run_config(config_path, seed=seed)
        payload = pipeline.stage_distances(config, stage)
        if out_path:
            pipeline.write_json(out_path, payload)
        _echo_json(payload)
    except ReplaykitError as exc:
        _fail(exc)


@main.command()
@config_option
@click.option("--stage", required=True, type=int)
@strategy_option
@click.option("--out", "out_path", type=click.Path(), default=None)
@seed_option
def plan(config_path, stage, strategy, out_path, seed):
    """Compute the replay plan for one stage."""
    try:
        config = load_run_config(config_path, seed=seed)
        replay_plan, _ = pipeline.stage_plan(config, stage, strategy=strategy)
        payload = replay_plan.to_json()
        if out_path:
            pipeline.write_json(out_path, payload)
        _echo_json(payload)
    except ReplaykitError as exc:
        _fail(exc)


@main.command()
@config_option
@click.option("--stage", required=True, type=int)
@strategy_option
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Augmented dataset path (default: state_dir/stage_<i>/augmented.jsonl).")
@seed_option
def sample(config_path, stage, strategy, out_path, seed):
    """Write the stage's augmented dataset (current rows + replay rows)."""
    try:
        config = load_run_config(config_path, seed=seed)
        replay_plan, augmented = pipeline.stage_plan(config, stage, strategy=strategy)
        if out_path is None:
            out_path = config.state_dir / f"stage_{stage}" / "augmented.jsonl"
        rows = save_corpus(augmented, out_path)
        _echo_json(
            {
                "stage": stage,
                "strategy": replay_plan.strategy,
                "path": str(out_path),
                "rows": rows,
                "replay_rows": len(replay_plan.sampled_ids),
            }
        )
    except ReplaykitError as exc:
        _fail(exc)


@main.command(name="eval")
@config_option
@click.option("--predictions", required=True, type=click.Path())
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Also write (stage, method, relative_gain) rows for plotting.")
@seed_option
def eval_cmd(config_path, predictions, out_path, csv_path, seed):
    """Score predictions: Rouge-L, relative gain, forgetting rates."""
    try:
        config = load_run_config(config_path, seed=seed)
        payload = pipeline.evaluate(config, predictions, report_path=out_path, csv_path=csv_path)
        _echo_json(payload)
    except ReplaykitError as exc:
        _fail(exc)


@main.group()
def tags():
    """Tag-table utilities."""


@tags.command()
@click.option("--tags", "tags_path", required=True, type=click.Path())
@click.option("--tag-embeddings", "tag_embeddings_path", type=click.Path(), default=None)
@click.option("--out-tags", required=True, type=click.Path())
@click.option("--out-map", required=True, type=click.Path())
@click.option("--threshold", type=float, default=0.1, show_default=True)
def normalize(tags_path, tag_embeddings_path, out_tags, out_map, threshold):
    """Canonicalize raw intention tags (rule stage + semantic merge)."""
    try:
        _echo_json(
            pipeline.normalize_tags(
                tags_path, tag_embeddings_path, out_tags, out_map, threshold=threshold
            )
        )
    except ReplaykitError as exc:
        _fail(exc)


@main.command()
@config_option
@click.option("--stage", type=int, default=None,
              help="Run a single stage instead of the whole sequence.")
@seed_option
def run(config_path, stage, seed):
    """Run stages in task order, persisting state; emits the manifest."""
    try:
        config = load_run_config(config_path, seed=seed)
        if stage is not None:
            _echo_json(pipeline.run_stage(config, stage))
        else:
            _echo_json(pipeline.run_all(config))
    except ReplaykitError as exc:
        _fail(exc)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Start the HTTP service wrapping the same pipeline."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
