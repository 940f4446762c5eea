"""Run configuration loaded from a JSON file.

Schema::

    {
      "task_order": ["taskA", "taskB", ...],
      "alpha_per_task": 200,
      "strategy": "inscl",            # or random | proto-data | proto-instruction | diverse
      "mode": "real",                 # or uniform
      "method": "exact",              # or sinkhorn
      "seed": 0,
      "holdout_fraction": 0.2,
      "epsilon": null,                # sinkhorn regularization; null = 1e-2 * mean cost
      "tol": 1e-9,
      "max_iter": 10000,
      "paths": {
        "corpus": "...jsonl",
        "embeddings": "...jsonl",
        "instance_embeddings": "...jsonl",   # optional; defaults to "embeddings"
        "tags": "...jsonl",                  # optional
        "tag_embeddings": "...jsonl",        # optional
        "bounds": "...json",                 # optional, needed by eval
        "state_dir": "..."
      }
    }

Relative paths resolve against the config file's directory.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError

_MODES = ("real", "uniform")
_METHODS = ("exact", "sinkhorn")
_STRATEGIES = ("inscl", "random", "proto-data", "proto-instruction", "diverse")


@dataclass
class RunConfig:
    task_order: list[str]
    corpus: Path
    embeddings: Path
    state_dir: Path
    instance_embeddings: Path | None = None
    tags: Path | None = None
    tag_embeddings: Path | None = None
    bounds: Path | None = None
    alpha_per_task: int = 200
    strategy: str = "inscl"
    mode: str = "real"
    method: str = "exact"
    seed: int = 0
    holdout_fraction: float = 0.2
    epsilon: float | None = None
    tol: float = 1e-9
    max_iter: int = 10000
    semantic_threshold: float = 0.1
    config_path: Path | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.task_order:
            raise ValidationError("task_order must not be empty")
        if len(set(self.task_order)) != len(self.task_order):
            raise ValidationError("task_order contains duplicate task ids")
        if self.strategy not in _STRATEGIES:
            raise ValidationError(
                f"unknown strategy {self.strategy!r}; expected one of {_STRATEGIES}"
            )
        if self.mode not in _MODES:
            raise ValidationError(f"unknown mode {self.mode!r}; expected one of {_MODES}")
        if self.method not in _METHODS:
            raise ValidationError(
                f"unknown method {self.method!r}; expected one of {_METHODS}"
            )
        if self.alpha_per_task <= 0:
            raise ValidationError("alpha_per_task must be positive")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValidationError("holdout_fraction must be in (0, 1)")

    @property
    def instance_embeddings_path(self) -> Path:
        return self.instance_embeddings or self.embeddings


def load_run_config(path: str | Path, seed: int | None = None) -> RunConfig:
    """Load and validate a config file; ``seed`` overrides the file's seed."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    paths = data.get("paths")
    if not isinstance(paths, dict):
        raise ValidationError(f"{path}: config requires a 'paths' object")
    base = path.parent

    def resolve(key: str, required: bool = False) -> Path | None:
        value = paths.get(key)
        if value is None:
            if required:
                raise ValidationError(f"{path}: paths.{key} is required")
            return None
        return (base / value).resolve()

    config = RunConfig(
        task_order=list(data.get("task_order", [])),
        corpus=resolve("corpus", required=True),
        embeddings=resolve("embeddings", required=True),
        state_dir=resolve("state_dir", required=True),
        instance_embeddings=resolve("instance_embeddings"),
        tags=resolve("tags"),
        tag_embeddings=resolve("tag_embeddings"),
        bounds=resolve("bounds"),
        alpha_per_task=int(data.get("alpha_per_task", 200)),
        strategy=data.get("strategy", "inscl"),
        mode=data.get("mode", "real"),
        method=data.get("method", "exact"),
        seed=int(seed if seed is not None else data.get("seed", 0)),
        holdout_fraction=float(data.get("holdout_fraction", 0.2)),
        epsilon=None if data.get("epsilon") is None else float(data["epsilon"]),
        tol=float(data.get("tol", 1e-9)),
        max_iter=int(data.get("max_iter", 10000)),
        semantic_threshold=float(data.get("semantic_threshold", 0.1)),
        config_path=path,
    )
    for name in ("corpus", "embeddings", "instance_embeddings", "tags", "tag_embeddings", "bounds"):
        p = getattr(config, name)
        if p is not None and not p.exists():
            raise ValidationError(f"{path}: paths.{name} does not exist: {p}")
    return config
