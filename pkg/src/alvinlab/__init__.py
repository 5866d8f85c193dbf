"""Pool-based active learning laboratory.

Implements the anchor-interpolation acquisition strategy (ALVIN) alongside six
baselines, a synthetic shortcut-dataset generator, training-dynamics group
inference, batch-quality metrics, and a seeded experiment harness with a CLI.
"""

from .alvin import (
    AlvinConfig,
    Anchor,
    CandidateSet,
    alvin_select,
    create_anchors,
    gather_candidates,
    interpolate_representations,
    select_batch,
)
from .baselines import (
    SelectionContext,
    StrategyId,
    select,
    select_alfa_mix,
    select_alvin_variant,
    select_badge,
    select_cal,
    select_embed_kmeans,
    select_random,
    select_uncertainty,
)
from .datasets import (
    DatasetSplit,
    Example,
    PoolState,
    ShortcutConfig,
    annotate,
    audit_pool,
    generate_shortcut_dataset,
    init_pool,
    load_embedding_dataset,
    save_embedding_dataset,
)
from .dynamics import infer_min_maj, minority_recall
from .errors import (
    ConfigError,
    DegenerateInputError,
    ParseError,
    TrainingDiverged,
    UsageError,
)
from .harness import (
    ExperimentConfig,
    FileDatasetConfig,
    RoundResult,
    evaluate,
    run_experiment,
    summarize,
    time_selection,
)
from .metrics import (
    BatchReport,
    batch_diversity,
    batch_uncertainty,
    representativeness,
)
from .model import (
    ModelParams,
    PredictionTrace,
    TrainConfig,
    encode,
    gradient_embedding,
    init_params,
    predict_proba,
    train,
)
from .numkit import (
    RngState,
    cosine_similarity,
    entropy,
    euclidean_distance,
    kmeans_pp_init,
    lloyd_kmeans,
    sample_beta,
    softmax,
)
from .selection import AcquisitionBatch

__version__ = "0.1.0"
