"""Training: AdamW with decoupled decay, warmup-plus-cosine schedule,
random-window sampling, the epoch loop, and the leave-one-subject-out
harness.

Learning-rate convention: the configured base_lr is rescaled to
effective_lr = base_lr * (batch_size * 2) / 256, ramped linearly over the
warmup epochs, then cosine-decayed to zero at max_epochs. Widths of the
fuzzy filters are clamped to their floor after every optimizer step.

Determinism: (dataset, configs, seed) fix every drawn window, dropout
mask, and parameter update. LOSO folds use seed XOR fold-index so they
are independent streams that can run in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import ConfigError, NumericError
from .evaluation import EvalReport, evaluate, feature_width, model_inputs, window_sample_count
from .fuzzy import SIGMA_FLOOR
from .network import ModelConfig, ModelParams, batch_cross_entropy, init_model, model_backward, model_forward
from .signals import EpochedDataset


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters and sampling policy."""

    base_lr: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 800
    warmup_epochs: int = 40
    weight_decay: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    windows_per_epoch: int = 12000
    window_seconds: float = 1.0
    seed: int = 0
    test_windows_per_trial: int = 10
    fft_band: tuple[float, float] = (8.0, 64.0)
    grad_clip_norm: float | None = None

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ConfigError(f"betas must lie in (0, 1), got {self.beta1}, {self.beta2}")
        if self.eps <= 0.0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.base_lr <= 0.0:
            raise ConfigError(f"base_lr must be positive, got {self.base_lr}")
        if self.weight_decay < 0.0:
            raise ConfigError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 0 or self.warmup_epochs < 0:
            raise ConfigError("epoch counts must be nonnegative")
        if self.max_epochs > 0 and self.warmup_epochs >= self.max_epochs:
            raise ConfigError(
                f"warmup_epochs {self.warmup_epochs} must be < max_epochs {self.max_epochs}"
            )
        if self.windows_per_epoch < 1:
            raise ConfigError("windows_per_epoch must be >= 1")
        if self.window_seconds <= 0.0:
            raise ConfigError("window_seconds must be positive")
        if self.test_windows_per_trial < 1:
            raise ConfigError("test_windows_per_trial must be >= 1")
        if self.grad_clip_norm is not None and self.grad_clip_norm <= 0.0:
            raise ConfigError("grad_clip_norm must be positive when set")


def effective_lr(base_lr: float, batch_size: int) -> float:
    """base_lr * (batch_size * 2) / 256."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    return base_lr * (batch_size * 2) / 256.0


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Warmup ramp to effective_lr, then cosine decay to zero."""
    if not 0 <= epoch < cfg.max_epochs:
        raise ValueError(f"epoch {epoch} out of range [0, {cfg.max_epochs})")
    eff = effective_lr(cfg.base_lr, cfg.batch_size)
    if epoch < cfg.warmup_epochs:
        return eff * (epoch + 1) / cfg.warmup_epochs
    span = cfg.max_epochs - cfg.warmup_epochs
    return 0.5 * eff * (1.0 + np.cos(np.pi * (epoch - cfg.warmup_epochs) / span))


@dataclass
class OptimizerState:
    """Per-tensor AdamW moments plus the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def init_optimizer(params: ModelParams) -> OptimizerState:
    tensors = params.tensors()
    return OptimizerState(
        m={k: np.zeros_like(t) for k, t in tensors.items()},
        v={k: np.zeros_like(t) for k, t in tensors.items()},
    )


def adamw_update_tensor(
    theta: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
    step: int, lr: float, cfg: TrainConfig,
) -> None:
    """One bias-corrected AdamW update, in place, for a single tensor.

    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
    """
    m *= cfg.beta1
    m += (1.0 - cfg.beta1) * grad
    v *= cfg.beta2
    v += (1.0 - cfg.beta2) * grad**2
    m_hat = m / (1.0 - cfg.beta1**step)
    v_hat = v / (1.0 - cfg.beta2**step)
    theta -= lr * (m_hat / (np.sqrt(v_hat) + cfg.eps) + cfg.weight_decay * theta)


def adamw_step(
    params: ModelParams,
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    cfg: TrainConfig,
) -> None:
    """Apply one optimizer step to every named tensor, then re-clamp widths."""
    tensors = params.tensors()
    if set(grads) != set(tensors):
        raise ValueError(
            f"gradient keys {sorted(set(grads) ^ set(tensors))} do not match parameters"
        )
    for name, g in grads.items():
        if not np.isfinite(np.sum(g)):
            raise NumericError(f"non-finite gradient in {name} at step {state.step + 1}")
    if cfg.grad_clip_norm is not None:
        total = np.sqrt(sum(float(np.sum(g**2)) for g in grads.values()))
        if total > cfg.grad_clip_norm:
            scale = cfg.grad_clip_norm / total
            grads = {k: g * scale for k, g in grads.items()}
    state.step += 1
    for name, theta in tensors.items():
        adamw_update_tensor(theta, grads[name], state.m[name], state.v[name],
                            state.step, lr, cfg)
    for filt in (params.spatial, params.temporal):
        if filt is not None:
            np.maximum(filt.widths, SIGMA_FLOOR, out=filt.widths)


@dataclass
class TrainingPool:
    """Flat view over the training trials for O(1) window sampling.

    signals keeps the stored float32 trials; provenance[i] = (subject_id,
    trial_idx) identifies where row i came from.
    """

    signals: np.ndarray      # (n_trials, C, S_total) float32
    labels: np.ndarray       # (n_trials,)
    provenance: np.ndarray   # (n_trials, 2)


def build_training_pool(dataset: EpochedDataset, subject_ids) -> TrainingPool:
    subject_ids = list(subject_ids)
    if not subject_ids:
        raise ConfigError("training pool needs at least one subject")
    for sid in subject_ids:
        if not 0 <= sid < dataset.n_subjects:
            raise IndexError(f"subject id {sid} out of range [0, {dataset.n_subjects})")
    if len(set(subject_ids)) != len(subject_ids):
        raise ConfigError(f"duplicate subject ids in {subject_ids}")
    signals, labels, prov = [], [], []
    for sid in subject_ids:
        for tidx, trial in enumerate(dataset.subjects[sid].trials):
            signals.append(trial.signal)
            labels.append(trial.label)
            prov.append((sid, tidx))
    return TrainingPool(
        signals=np.stack(signals),
        labels=np.asarray(labels, dtype=np.int64),
        provenance=np.asarray(prov, dtype=np.int64),
    )


def sample_training_batch(
    pool: TrainingPool,
    window_samples: int,
    batch_size: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw batch_size windows uniformly over (trial, start offset).

    Draw order is fixed (trial indices then starts) so a seeded generator
    reproduces the exact sequence. Returns (windows float64 (B, C, S),
    labels, provenance (B, 2) of (subject_id, trial_idx)).
    """
    n_trials, n_channels, s_total = pool.signals.shape
    if window_samples > s_total:
        raise ConfigError(
            f"window of {window_samples} samples exceeds trial length {s_total}"
        )
    idx = rng.integers(0, n_trials, size=batch_size)
    starts = rng.integers(0, s_total - window_samples + 1, size=batch_size)
    gather = pool.signals[
        idx[:, None, None],
        np.arange(n_channels)[None, :, None],
        starts[:, None, None] + np.arange(window_samples)[None, None, :],
    ]
    return gather.astype(np.float64), pool.labels[idx], pool.provenance[idx]


@dataclass
class EpochRecord:
    """One row of the training trace."""

    epoch: int
    lr: float
    mean_loss: float


def _restore(params: ModelParams, snapshot: dict[str, np.ndarray]) -> None:
    for name, tensor in params.tensors().items():
        tensor[...] = snapshot[name]


def train(
    dataset: EpochedDataset,
    train_subject_ids,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    provenance_sink: Callable[[np.ndarray], None] | None = None,
) -> tuple[ModelParams, list[EpochRecord]]:
    """Train a fresh model on the given subjects' trials.

    Epochs draw windows_per_epoch samples in batches of batch_size (the
    final batch may be short), with the mean batch cross-entropy driving
    AdamW under the warmup-cosine schedule. On divergence (non-finite loss
    or gradient) the parameters are rolled back to the last completed
    epoch and NumericError is raised with .params and .trace attached.

    provenance_sink, if given, receives each batch's (B, 2) array of
    (subject_id, trial_idx) rows; used to audit data hygiene.
    """
    window_samples = window_sample_count(train_cfg.window_seconds, dataset.fs)
    expected_width = feature_width(
        model_cfg.feature_mode, window_samples, dataset.fs, train_cfg.fft_band
    )
    if model_cfg.n_samples != expected_width:
        raise ConfigError(
            f"model n_samples {model_cfg.n_samples} != {expected_width} "
            f"({model_cfg.feature_mode} width of a {train_cfg.window_seconds} s window)"
        )
    if model_cfg.n_channels != dataset.n_channels:
        raise ConfigError(
            f"model n_channels {model_cfg.n_channels} != dataset {dataset.n_channels}"
        )
    if model_cfg.n_classes != dataset.n_classes:
        raise ConfigError(
            f"model n_classes {model_cfg.n_classes} != dataset {dataset.n_classes}"
        )

    pool = build_training_pool(dataset, train_subject_ids)
    root = np.random.SeedSequence(train_cfg.seed)
    seq_init, seq_sample, seq_dropout = root.spawn(3)
    params = init_model(model_cfg, seed=seq_init)
    state = init_optimizer(params)
    sample_rng = np.random.default_rng(seq_sample)
    dropout_rng = np.random.default_rng(seq_dropout)

    trace: list[EpochRecord] = []
    for epoch in range(train_cfg.max_epochs):
        lr = lr_at_epoch(train_cfg, epoch)
        snapshot = {k: t.copy() for k, t in params.tensors().items()}
        loss_sum = 0.0
        remaining = train_cfg.windows_per_epoch
        try:
            while remaining > 0:
                b = min(train_cfg.batch_size, remaining)
                windows, labels, prov = sample_training_batch(
                    pool, window_samples, b, sample_rng
                )
                if provenance_sink is not None:
                    provenance_sink(prov)
                x = model_inputs(windows, model_cfg.feature_mode, dataset.fs,
                                 train_cfg.fft_band)
                _, cache = model_forward(params, x, training=True, rng=dropout_rng)
                loss, _ = batch_cross_entropy(cache.logits, labels)
                if not np.isfinite(loss):
                    raise NumericError(f"non-finite loss at epoch {epoch}")
                grads = model_backward(cache, labels)
                adamw_step(params, grads, state, lr, train_cfg)
                loss_sum += loss * b
                remaining -= b
        except NumericError as exc:
            _restore(params, snapshot)
            err = NumericError(
                f"training diverged at epoch {epoch}; parameters rolled back "
                f"to epoch {epoch - 1}: {exc}"
            )
            err.params = params
            err.trace = trace
            raise err from exc
        trace.append(EpochRecord(
            epoch=epoch, lr=lr,
            mean_loss=loss_sum / train_cfg.windows_per_epoch,
        ))
    return params, trace


@dataclass
class FoldResult:
    """Outcome of one leave-one-subject-out fold."""

    held_out_subject: int
    accuracy: float
    itr_bits_per_min: float
    confusion: np.ndarray
    epochs_run: int


def fold_seed(base_seed: int, fold_idx: int) -> int:
    """Per-fold RNG stream: base seed XOR fold index."""
    return int(base_seed) ^ fold_idx


def fold_eval_seed(base_seed: int, fold_idx: int) -> np.random.SeedSequence:
    """Evaluation stream for a fold, independent of its training stream."""
    return np.random.SeedSequence([fold_seed(base_seed, fold_idx) & (2**63 - 1), 0x5EED])


def loso_run(
    dataset: EpochedDataset,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    subjects=None,
    fold_hook: Callable[[int, ModelParams, list[EpochRecord], EvalReport], None] | None = None,
) -> list[FoldResult]:
    """Leave-one-subject-out transfer: one fold per held-out subject.

    Fold k trains on every other subject with seed = train_cfg.seed XOR k,
    then scores subject k's trials on test_windows_per_trial fixed-seed
    windows per trial. fold_hook (if given) receives each fold's trained
    parameters, trace, and report, e.g. to persist artifacts.
    """
    if dataset.n_subjects < 2:
        raise ConfigError("leave-one-subject-out needs at least 2 subjects")
    subjects = list(range(dataset.n_subjects)) if subjects is None else list(subjects)
    results = []
    for held_out in subjects:
        if not 0 <= held_out < dataset.n_subjects:
            raise IndexError(f"subject {held_out} out of range [0, {dataset.n_subjects})")
        train_ids = [s for s in range(dataset.n_subjects) if s != held_out]
        fold_cfg = replace(train_cfg, seed=fold_seed(train_cfg.seed, held_out))
        params, trace = train(dataset, train_ids, model_cfg, fold_cfg)
        report = evaluate(
            params,
            dataset.subjects[held_out].trials,
            dataset.fs,
            train_cfg.window_seconds,
            eval_seed=fold_eval_seed(train_cfg.seed, held_out),
            test_windows_per_trial=train_cfg.test_windows_per_trial,
            fft_band=train_cfg.fft_band,
        )
        if fold_hook is not None:
            fold_hook(held_out, params, trace, report)
        results.append(FoldResult(
            held_out_subject=held_out,
            accuracy=report.accuracy,
            itr_bits_per_min=report.itr_bits_per_min,
            confusion=report.confusion,
            epochs_run=len(trace),
        ))
    return results
