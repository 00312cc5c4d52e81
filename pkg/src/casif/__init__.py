"""Session-based next-item recommendation with attention over session graphs.

The pipeline: raw click logs are parsed, filtered and split into prefix
examples (`corpus`); each prefix becomes a small directed graph (`graph`);
a gated propagation network plus interest attention scores every candidate
item (`model`); `trainer` fits the parameters with Adam and writes binary
checkpoints; `evaluation` reports Recall@k / MRR@k; `synth` generates toy
click logs; `cli` ties it together as a command-line tool.
"""

from .config import DEFAULTS, effective_config, hyper_params, train_config
from .corpus import (
    ClickEvent,
    ItemVocabulary,
    LogFormat,
    PrefixExample,
    ProcessedDataset,
    Session,
    build_vocab_and_reindex,
    expand_prefixes,
    load_dataset,
    parse_click_log,
    parse_timestamp_ms,
    persist_dataset,
    sessionize_and_filter,
    take_recent_fraction,
    time_split,
)
from .errors import ConfigError, DataError, VerificationError
from .evaluation import (
    MetricsReport,
    evaluate_model,
    label_rank,
    mrr_at_k,
    pop_baseline,
    popularity_scores,
    rank_topk,
    recall_at_k,
)
from .graph import SessionGraph, build_session_graph
from .model import (
    ForwardTrace,
    HyperParams,
    ModelParams,
    backward,
    finite_difference_grad,
    forward,
    init_params,
    loss,
    run_gradient_check,
)
from .rng import SplitMix64, substream_seed
from .synth import SynthSpec, generate_sessions, write_click_log
from .trainer import (
    AdamState,
    Checkpoint,
    TrainConfig,
    TrainResult,
    TrainingError,
    adam_step,
    load_checkpoint,
    lr_for_epoch,
    make_batches,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "Checkpoint",
    "ClickEvent",
    "ConfigError",
    "DEFAULTS",
    "DataError",
    "ForwardTrace",
    "HyperParams",
    "ItemVocabulary",
    "LogFormat",
    "MetricsReport",
    "ModelParams",
    "PrefixExample",
    "ProcessedDataset",
    "Session",
    "SessionGraph",
    "SplitMix64",
    "SynthSpec",
    "TrainConfig",
    "TrainResult",
    "TrainingError",
    "VerificationError",
    "adam_step",
    "backward",
    "build_session_graph",
    "build_vocab_and_reindex",
    "effective_config",
    "evaluate_model",
    "expand_prefixes",
    "finite_difference_grad",
    "forward",
    "generate_sessions",
    "hyper_params",
    "init_params",
    "label_rank",
    "load_checkpoint",
    "load_dataset",
    "loss",
    "lr_for_epoch",
    "make_batches",
    "mrr_at_k",
    "parse_click_log",
    "parse_timestamp_ms",
    "persist_dataset",
    "pop_baseline",
    "popularity_scores",
    "rank_topk",
    "recall_at_k",
    "run_gradient_check",
    "save_checkpoint",
    "sessionize_and_filter",
    "substream_seed",
    "take_recent_fraction",
    "time_split",
    "train",
    "train_config",
    "write_click_log",
]
