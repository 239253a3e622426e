"""Accuracy, information transfer rate, and window-based model evaluation.

ITR follows the standard selection-rate formula in bits per minute,

    ITR = 60/T * [log2 N + P log2 P + (1-P) log2((1-P)/(N-1))],

with T the selection time in seconds. Evaluation always uses
T = window_seconds + 0.5, the extra half second accounting for gaze
shift between selections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .network import ModelParams, check_compatible, model_forward
from .signals import Trial, fft_feature_freqs, fft_features

GAZE_SHIFT_SECONDS = 0.5


def accuracy(predictions, labels) -> float:
    """Fraction of predictions equal to labels."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise ValueError(
            f"need equal-length nonempty sequences, got {predictions.shape} and {labels.shape}"
        )
    return float(np.mean(predictions == labels))


def itr(p: float, n: int, t: float) -> float:
    """Information transfer rate in bits/min; raw formula value.

    The P -> 0 and P -> 1 limits are handled analytically (x log2 x -> 0).
    The rate is log2(n) minus the entropy of a uniform-error channel, so
    it is nonnegative with its minimum exactly at chance p = 1/n; there,
    floating-point cancellation can leave a tiny negative residue, which
    EvalReport's clamped field floors at zero.
    """
    if n < 2:
        raise ValueError(f"ITR needs at least 2 classes, got {n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"accuracy must lie in [0, 1], got {p}")
    if t <= 0.0:
        raise ValueError(f"selection time must be positive, got {t}")
    bits = np.log2(n)
    if p > 0.0:
        bits += p * np.log2(p)
    if p < 1.0:
        bits += (1.0 - p) * np.log2((1.0 - p) / (n - 1))
    return float(60.0 / t * bits)


@dataclass
class EvalReport:
    """Window-level evaluation of one model on one subject's trials."""

    accuracy: float
    n_classes: int
    window_seconds: float
    t_selection: float
    itr_bits_per_min: float
    itr_clamped: float
    confusion: np.ndarray
    n_windows: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n_classes": self.n_classes,
            "window_seconds": self.window_seconds,
            "t_selection": self.t_selection,
            "itr_bits_per_min": self.itr_bits_per_min,
            "itr_clamped": self.itr_clamped,
            "confusion": self.confusion.tolist(),
            "n_windows": self.n_windows,
        }


def window_sample_count(window_seconds: float, fs: float) -> int:
    """Window length in samples; must come out integral."""
    exact = window_seconds * fs
    if exact < 1 or abs(exact - round(exact)) > 1e-9:
        raise ConfigError(
            f"window_seconds*fs must be a positive integer, got {exact}"
        )
    return int(round(exact))


def model_inputs(
    windows: np.ndarray,
    feature_mode: str,
    fs: float,
    band: tuple[float, float] = (8.0, 64.0),
) -> np.ndarray:
    """Map raw windows (..., C, S) to what the model consumes."""
    if feature_mode == "fft":
        return fft_features(windows, fs, band=band)
    return windows


def feature_width(
    feature_mode: str, window_samples: int, fs: float,
    band: tuple[float, float] = (8.0, 64.0),
) -> int:
    """Token width the model sees for a given window length."""
    if feature_mode == "fft":
        return len(fft_feature_freqs(fs, window_samples, band=band))
    return window_samples


def evaluate(
    params: ModelParams,
    trials: list[Trial],
    fs: float,
    window_seconds: float,
    eval_seed,
    test_windows_per_trial: int = 10,
    fft_band: tuple[float, float] = (8.0, 64.0),
) -> EvalReport:
    """Score a model on fixed-seed random windows drawn from each trial.

    Per trial, test_windows_per_trial start offsets are drawn uniformly;
    the draw order (trials in sequence, one integers() call each) is part
    of the determinism contract. Predictions are argmax logits at
    inference (no RNG consumed by the model).
    """
    if not trials:
        raise ValueError("no trials to evaluate")
    if test_windows_per_trial < 1:
        raise ConfigError(f"test_windows_per_trial must be >= 1, got {test_windows_per_trial}")
    cfg = params.config
    n_samples_total = trials[0].signal.shape[1]
    window_samples = window_sample_count(window_seconds, fs)
    if window_samples > n_samples_total:
        raise ConfigError(
            f"window of {window_samples} samples exceeds trial length {n_samples_total}"
        )
    check_compatible(
        cfg, trials[0].signal.shape[0],
        feature_width(cfg.feature_mode, window_samples, fs, fft_band),
    )

    rng = np.random.default_rng(eval_seed)
    windows = []
    labels = []
    for trial in trials:
        starts = rng.integers(0, n_samples_total - window_samples + 1,
                              size=test_windows_per_trial)
        for start in starts:
            windows.append(trial.signal[:, start : start + window_samples])
            labels.append(trial.label)
    x = model_inputs(np.asarray(windows, dtype=np.float64), cfg.feature_mode, fs, fft_band)
    labels = np.asarray(labels)

    logits, _ = model_forward(params, x, training=False)
    predictions = np.argmax(logits, axis=1)

    m = cfg.n_classes
    confusion = np.zeros((m, m), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    p = float(np.trace(confusion) / confusion.sum())
    t_selection = window_seconds + GAZE_SHIFT_SECONDS
    raw_itr = itr(p, m, t_selection)
    return EvalReport(
        accuracy=p,
        n_classes=m,
        window_seconds=window_seconds,
        t_selection=t_selection,
        itr_bits_per_min=raw_itr,
        itr_clamped=max(0.0, raw_itr),
        confusion=confusion,
        n_windows=int(confusion.sum()),
    )
