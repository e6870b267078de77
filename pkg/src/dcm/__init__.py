"""Conservative classifiers via confidence minimization.

Small dense classifiers are pretrained on labeled data and then fine-tuned
to minimize predictive confidence on an uncertainty dataset, which makes
their maximum softmax probability a usable signal for out-of-distribution
detection and selective classification.  The package also ships the
detection and selective metrics, deterministic synthetic benchmarks, the
closed-form theory behind the approach, and a CLI harness.
"""

from ._backend import kernel_backend
from .datagen import (
    BenchmarkKind,
    BenchmarkSpec,
    LabeledDataset,
    default_spec,
    gen_covariate_shift,
    gen_near_ood,
    gen_standard_ood,
    generate,
    resplit,
)
from .errors import (
    ConfigError,
    DcmError,
    EmptyInputError,
    NumericError,
    ShapeError,
)
from .harness import (
    ExperimentConfig,
    Mode,
    RunManifest,
    Sweep,
    parse_config,
    run_experiment,
)
from .losses import conf_loss, dcm_objective, xent_loss
from .metrics import (
    EvalReport,
    ScoredExample,
    acc_at_cov,
    aupr,
    auroc,
    build_report,
    cov_at_acc,
    ece,
    fpr_at_tpr,
    sc_auc,
    selective_curve,
)
from .netcore import (
    Activation,
    Batch,
    GradientSet,
    MlpModel,
    backward,
    forward_logits,
    init_model,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    softmax,
)
from .scoring import ScoreKind, msp_confidence, ood_score
from .theory import (
    SeparationCertificate,
    certify_separation,
    msp_uniform,
    optimal_distribution,
    optimal_msp_id,
    pinsker_check,
    separation_epsilon,
)
from .training import (
    DcmConfig,
    EmptyErrorSetWarning,
    ValPartition,
    finetune_ood,
    finetune_sc,
    finetune_transductive,
    partition_val,
    pretrain,
)

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "Batch",
    "BenchmarkKind",
    "BenchmarkSpec",
    "ConfigError",
    "DcmConfig",
    "DcmError",
    "EmptyErrorSetWarning",
    "EmptyInputError",
    "EvalReport",
    "ExperimentConfig",
    "GradientSet",
    "LabeledDataset",
    "MlpModel",
    "Mode",
    "NumericError",
    "RunManifest",
    "ScoreKind",
    "ScoredExample",
    "SeparationCertificate",
    "ShapeError",
    "Sweep",
    "ValPartition",
    "acc_at_cov",
    "aupr",
    "auroc",
    "backward",
    "build_report",
    "certify_separation",
    "conf_loss",
    "cov_at_acc",
    "dcm_objective",
    "default_spec",
    "ece",
    "finetune_ood",
    "finetune_sc",
    "finetune_transductive",
    "forward_logits",
    "fpr_at_tpr",
    "gen_covariate_shift",
    "gen_near_ood",
    "gen_standard_ood",
    "generate",
    "init_model",
    "kernel_backend",
    "load_checkpoint",
    "msp_confidence",
    "msp_uniform",
    "ood_score",
    "optimal_distribution",
    "optimal_msp_id",
    "parse_config",
    "partition_val",
    "pinsker_check",
    "pretrain",
    "resplit",
    "run_experiment",
    "save_checkpoint",
    "sc_auc",
    "selective_curve",
    "separation_epsilon",
    "sgd_step",
    "softmax",
    "xent_loss",
]
