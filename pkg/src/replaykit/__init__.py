"""Replay curation for continual instruction tuning.

Measures task similarity as the Wasserstein distance between instruction
distributions (cosine cost over instruction embeddings), allocates replay
budgets proportionally to distance, scores instructions by the rarity of
their normalized intention tags, and emits per-stage replay datasets
alongside baseline strategies and forgetting metrics.
"""

from .baselines import (
    ClusterModel,
    build_baseline_stage,
    diverse_instruction,
    fit_kmeans,
    mean_silhouette,
    prototype_data,
    prototype_instruction,
    random_replay,
)
from .corpus import (
    EmbeddingTable,
    Instance,
    TagTable,
    TaskDataset,
    instance_key,
    load_category_map,
    load_corpus,
    load_embeddings,
    load_tags,
    save_corpus,
    split_holdout,
)
from .errors import (
    FormatError,
    MissingEmbeddingError,
    ParseError,
    PoolLookupError,
    PoolStateError,
    ReplaykitError,
    SequencingError,
    SplitError,
    ValidationError,
)
from .config import RunConfig, load_run_config
from .evaluation import (
    StageResult,
    evaluate_run,
    forgetting_rate,
    relative_gain,
    rouge_l,
)
from .pipeline import (
    evaluate,
    ingest,
    normalize_tags,
    run_all,
    run_stage,
    stage_distances,
    stage_plan,
)
from .replay import (
    ReplayPlan,
    allocate_budgets,
    build_stage_dataset,
    insinfo_sample,
    largest_remainder,
    proportional_allocate,
)
from .taginfo import (
    InstructionPool,
    TagCanonicalizer,
    build_canonicalizer,
    insinfo,
    normalize_rule,
    semantic_aggregate,
    update_pool,
)
from .transport import (
    CostMatrix,
    SinkhornResult,
    TransportPlan,
    cosine_distance,
    cost_matrix,
    exact_wasserstein,
    sinkhorn_wasserstein,
    task_distance,
)

__version__ = "0.1.0"
