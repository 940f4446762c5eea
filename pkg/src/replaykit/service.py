"""HTTP service exposing the pipeline; request/response models mirror the CLI.

Every endpoint takes server-side paths (the service and its clients share a
filesystem, as in a training cluster). Validation errors map to 422,
sequencing errors to 409.
"""

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import pipeline
from .config import load_run_config
from .corpus import save_corpus
from .errors import ReplaykitError, SequencingError

app = FastAPI(
    title="replaykit",
    description="Replay curation for continual instruction tuning",
    version="0.1.0",
)


class IngestRequest(BaseModel):
    config: str
    seed: int | None = None


class TaskSummary(BaseModel):
    task_id: str
    train_rows: int
    holdout_rows: int
    distinct_instructions: int


class IngestResponse(BaseModel):
    tasks: list[TaskSummary]
    train_rows: int
    holdout_rows: int
    embedding_dim: int
    tagged_instructions: int


class DistancesRequest(BaseModel):
    config: str
    stage: int
    seed: int | None = None


class DistancesResponse(BaseModel):
    stage: int
    mode: str
    method: str
    distances: dict[str, float]


class PlanRequest(BaseModel):
    config: str
    stage: int
    strategy: str | None = None
    seed: int | None = None


class PlanResponse(BaseModel):
    stage: int
    strategy: str
    total_budget: int
    task_budgets: dict[str, int]
    instruction_quotas: dict[str, dict[str, int]]
    sampled_ids: list[str]
    notes: list[str]


class SampleRequest(BaseModel):
    config: str
    stage: int
    strategy: str | None = None
    seed: int | None = None
    out: str | None = Field(
        default=None, description="Output path; defaults into the state directory."
    )


class SampleResponse(BaseModel):
    stage: int
    strategy: str
    path: str
    rows: int
    replay_rows: int


class EvalRequest(BaseModel):
    config: str
    predictions: str
    out: str | None = None
    csv: str | None = None
    seed: int | None = None


class NormalizeTagsRequest(BaseModel):
    tags: str
    tag_embeddings: str | None = None
    out_tags: str
    out_map: str
    threshold: float = 0.1


class NormalizeTagsResponse(BaseModel):
    instructions: int
    raw_tags: int
    canonical_tags: int
    merged: int


class RunRequest(BaseModel):
    config: str
    stage: int | None = None
    seed: int | None = None


def _guard(fn):
    try:
        return fn()
    except SequencingError as exc:
        raise HTTPException(status_code=409, detail=str(exc)) from exc
    except ReplaykitError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


@app.get("/healthz")
def healthz() -> dict:
    return {"status": "ok"}


@app.post("/ingest", response_model=IngestResponse)
def ingest(request: IngestRequest):
    def go():
        config = load_run_config(request.config, seed=request.seed)
        return pipeline.ingest(config)

    return _guard(go)


@app.post("/distances", response_model=DistancesResponse)
def distances(request: DistancesRequest):
    def go():
        config = load_run_config(request.config, seed=request.seed)
        return pipeline.stage_distances(config, request.stage)

    return _guard(go)


@app.post("/plan", response_model=PlanResponse)
def plan(request: PlanRequest):
    def go():
        config = load_run_config(request.config, seed=request.seed)
        replay_plan, _ = pipeline.stage_plan(config, request.stage, strategy=request.strategy)
        return replay_plan.to_json()

    return _guard(go)


@app.post("/sample", response_model=SampleResponse)
def sample(request: SampleRequest):
    def go():
        config = load_run_config(request.config, seed=request.seed)
        replay_plan, augmented = pipeline.stage_plan(
            config, request.stage, strategy=request.strategy
        )
        out = request.out or str(config.state_dir / f"stage_{request.stage}" / "augmented.jsonl")
        rows = save_corpus(augmented, out)
        return {
            "stage": request.stage,
            "strategy": replay_plan.strategy,
            "path": out,
            "rows": rows,
            "replay_rows": len(replay_plan.sampled_ids),
        }

    return _guard(go)


@app.post("/eval")
def eval_endpoint(request: EvalRequest) -> dict:
    def go():
        config = load_run_config(request.config, seed=request.seed)
        return pipeline.evaluate(
            config, request.predictions, report_path=request.out, csv_path=request.csv
        )

    return _guard(go)


@app.post("/tags/normalize", response_model=NormalizeTagsResponse)
def tags_normalize(request: NormalizeTagsRequest):
    def go():
        return pipeline.normalize_tags(
            request.tags,
            request.tag_embeddings,
            request.out_tags,
            request.out_map,
            threshold=request.threshold,
        )

    return _guard(go)


@app.post("/run")
def run(request: RunRequest) -> dict:
    def go():
        config = load_run_config(request.config, seed=request.seed)
        if request.stage is not None:
            return pipeline.run_stage(config, request.stage)
        return pipeline.run_all(config)

    return _guard(go)
