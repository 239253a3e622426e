"""Fuzzy-attention SSVEP decoding lab.

A numpy implementation of a two-stage fuzzy TSK attention network for
SSVEP frequency decoding: a spatial filter over channels-as-tokens, a
temporal filter over time-points-as-tokens, and an MLP head, trained
with AdamW under a warmup-cosine schedule and evaluated zero-shot with
leave-one-subject-out folds. Interpretability tools recover rule
centers in raw-signal space and spectrum-analyze firing strengths.

The public surface re-exported here mirrors the module layout: signal
synthesis (`signals`), binary formats (`dataio`), the filter and model
math (`fuzzy`, `network`), training and evaluation (`optim`,
`evaluation`), interpretability (`explain`), finite-difference checking
(`gradcheck`), and the command line (`cli.main`).
"""

from .errors import ConfigError, FormatError, NumericError
from .evaluation import EvalReport, accuracy, evaluate, itr, model_inputs
from .explain import (
    ExplainReport,
    PseudoInverseResult,
    RuleSpectra,
    firing_report,
    firing_weighted_tokens,
    minmax_normalize,
    pinv,
    recover_centers,
    recover_input,
    rule_spectra,
)
from .fuzzy import (
    FiringMatrix,
    FuzzyFilterParams,
    LinearMap,
    filter_backward,
    filter_forward,
    firing_strengths,
    init_filter,
)
from .gradcheck import GradCheckReport, check_model_gradients
from .network import (
    ModelConfig,
    ModelParams,
    cross_entropy,
    init_model,
    load_checkpoint,
    model_backward,
    model_forward,
    save_checkpoint,
)
from .optim import (
    FoldResult,
    TrainConfig,
    effective_lr,
    fold_seed,
    loso_run,
    lr_at_epoch,
    train,
)
from .signals import (
    EpochedDataset,
    StimulusConfig,
    SubjectModel,
    WindowSpec,
    bandpass,
    build_dataset,
    extract_window,
    fft_features,
    stimulus_chrominance,
    synthesize_trial,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "FormatError",
    "NumericError",
    "EvalReport",
    "accuracy",
    "evaluate",
    "itr",
    "model_inputs",
    "ExplainReport",
    "PseudoInverseResult",
    "RuleSpectra",
    "firing_report",
    "firing_weighted_tokens",
    "minmax_normalize",
    "pinv",
    "recover_centers",
    "recover_input",
    "rule_spectra",
    "FiringMatrix",
    "FuzzyFilterParams",
    "LinearMap",
    "filter_backward",
    "filter_forward",
    "firing_strengths",
    "init_filter",
    "GradCheckReport",
    "check_model_gradients",
    "ModelConfig",
    "ModelParams",
    "cross_entropy",
    "init_model",
    "load_checkpoint",
    "model_backward",
    "model_forward",
    "save_checkpoint",
    "FoldResult",
    "TrainConfig",
    "effective_lr",
    "fold_seed",
    "loso_run",
    "lr_at_epoch",
    "train",
    "EpochedDataset",
    "StimulusConfig",
    "SubjectModel",
    "WindowSpec",
    "bandpass",
    "build_dataset",
    "extract_window",
    "fft_features",
    "stimulus_chrominance",
    "synthesize_trial",
    "__version__",
]
