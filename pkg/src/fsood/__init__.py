"""Few-shot out-of-distribution detection toolkit.

Post-hoc uncertainty scores over exported logits and features, fused
original/fine-tuned feature pipelines (linear head and k-NN), and FPR@95 /
AUROC / ID-accuracy evaluation over a few-shot benchmark grid.
"""

from .bench import BenchReport, emit_report, run_benchmark, variant_divergence_witness
from .config import ALL_METHODS, FUSED_VARIANTS, SCORE_METHODS, RunConfig, TrainConfig
from .core import (
    DatasetBundle,
    OODSet,
    few_shot_indices,
    few_shot_subsample,
    l2_normalize_rows,
    validate_bundle,
)
from .dsgf import (
    LinearHead,
    cross_entropy,
    dsgf_pipeline,
    fuse_features,
    head_forward,
    head_gradient,
    train_head,
)
from .errors import BundleError, ConfigError, FSOODError, MatrixFormatError, ValidationError
from .evaluation import EvalReport, auroc, detect, evaluate_suite, fpr_at_tpr, id_accuracy
from .io import load_bundle, load_matrix, save_bundle, save_matrix
from .knn import FusedKnnIndex, KnnIndex, build_index, fused_knn_score, knn_score, knn_score_batch
from .scores import (
    energy_score,
    entropy_score,
    maxlogit_score,
    msp_score,
    score_batch,
    softmax,
    variance_score,
)
from .synth import SynthConfig, synth_bundle

__version__ = "0.1.0"

__all__ = [
    "BenchReport",
    "emit_report",
    "run_benchmark",
    "variant_divergence_witness",
    "ALL_METHODS",
    "FUSED_VARIANTS",
    "SCORE_METHODS",
    "RunConfig",
    "TrainConfig",
    "DatasetBundle",
    "OODSet",
    "few_shot_indices",
    "few_shot_subsample",
    "l2_normalize_rows",
    "validate_bundle",
    "LinearHead",
    "cross_entropy",
    "dsgf_pipeline",
    "fuse_features",
    "head_forward",
    "head_gradient",
    "train_head",
    "BundleError",
    "ConfigError",
    "FSOODError",
    "MatrixFormatError",
    "ValidationError",
    "EvalReport",
    "auroc",
    "detect",
    "evaluate_suite",
    "fpr_at_tpr",
    "id_accuracy",
    "load_bundle",
    "load_matrix",
    "save_bundle",
    "save_matrix",
    "FusedKnnIndex",
    "KnnIndex",
    "build_index",
    "fused_knn_score",
    "knn_score",
    "knn_score_batch",
    "energy_score",
    "entropy_score",
    "maxlogit_score",
    "msp_score",
    "score_batch",
    "softmax",
    "variance_score",
    "SynthConfig",
    "synth_bundle",
]
