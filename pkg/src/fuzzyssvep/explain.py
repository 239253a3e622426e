"""Interpretability: what the learned rules look like in signal space.

Three views of a trained model on one window:

* firing matrices: per-token rule activations of each filter, straight
  from an inference forward pass;
* recovered centers: rule centers mapped back through the (pseudo)inverse
  of the query projection, so a spatial rule becomes a signal-length
  template and a temporal rule a channel profile;
* rule spectra: amplitude spectrum of each temporal rule's firing time
  series, where harmonic structure of the attended stimulus shows up.

Everything here is pure over an immutable model and sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .fuzzy import FIRST_ORDER, FuzzyFilterParams, LinearMap
from .network import ModelParams, model_forward


@dataclass
class PseudoInverseResult:
    """SVD pseudoinverse with the rank decision made explicit.

    Singular values below eps * max(shape) * sigma_max are treated as
    zero; rank counts the survivors.
    """

    w_pinv: np.ndarray            # (D_in, D_out)
    rank: int
    singular_values: np.ndarray   # descending, full length min(shape)


def pinv(w: np.ndarray) -> PseudoInverseResult:
    """Moore-Penrose pseudoinverse of a real matrix via SVD."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or min(w.shape) < 1:
        raise ValueError(f"expected a nonempty matrix, got shape {w.shape}")
    if not np.isfinite(w).all():
        raise NumericError("pinv input contains non-finite entries")
    try:
        u, s, vt = np.linalg.svd(w, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD did not converge: {exc}") from exc
    tol = np.finfo(np.float64).eps * max(w.shape) * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    inv_s = np.zeros_like(s)
    inv_s[:rank] = 1.0 / s[:rank]
    return PseudoInverseResult(
        w_pinv=(vt.T * inv_s) @ u.T, rank=rank, singular_values=s,
    )


def recover_input(layer: LinearMap, y: np.ndarray) -> np.ndarray:
    """Invert y = W x + b: exact when W is invertible, min-norm
    least-squares otherwise. Accepts a vector or a stack of row vectors."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != layer.W.shape[0]:
        raise ValueError(
            f"y width {y.shape[-1]} != layer output width {layer.W.shape[0]}"
        )
    return (y - layer.b) @ pinv(layer.W).w_pinv.T


def recover_centers(filt: FuzzyFilterParams) -> np.ndarray:
    """Map rule centers back to the filter's input space, row per rule.

    Centers live in query space; row r of the result is W_Q+(m_r - b_Q).
    For a spatial filter this is an (R, S) bank of signal-length
    templates; for a temporal filter an (R, C) bank of channel profiles.
    """
    return recover_input(filt.query, filt.centers)


def firing_weighted_tokens(tokens: np.ndarray, firing: np.ndarray) -> np.ndarray:
    """Firing-weighted mean input token per rule: (T, D), (T, R) -> (R, D).

    Weights are each rule's firing column normalized to sum to one, so a
    rule's row is the average of the tokens it attends to.
    """
    tokens = np.asarray(tokens, dtype=np.float64)
    firing = np.asarray(firing, dtype=np.float64)
    if tokens.ndim != 2 or firing.ndim != 2 or tokens.shape[0] != firing.shape[0]:
        raise ValueError(
            f"incompatible shapes tokens{tokens.shape} firing{firing.shape}"
        )
    weights = firing / firing.sum(axis=0)
    return weights.T @ tokens


def minmax_normalize(a: np.ndarray, axis: int) -> np.ndarray:
    """(a - min) / (max - min) along axis; constant slices map to zero.

    Display-only transform: reports always store raw values, figures may
    normalize across tokens (axis=0 of a firing matrix) or across rules
    (axis=1).
    """
    a = np.asarray(a, dtype=np.float64)
    lo = a.min(axis=axis, keepdims=True)
    span = a.max(axis=axis, keepdims=True) - lo
    return np.divide(a - lo, span, out=np.zeros_like(a, dtype=np.float64),
                     where=span > 0)


@dataclass
class RuleSpectra:
    """Amplitude spectrum of each rule's firing time series.

    DC is removed before the FFT, so the bins cover (0, fs/2] and a
    constant firing column yields an all-zero row.
    """

    frequencies: np.ndarray   # (F,) Hz, ascending
    magnitudes: np.ndarray    # (R, F), nonnegative
    peak_hz: np.ndarray       # (R,) frequency of each rule's largest bin

    def to_dict(self) -> dict:
        return {
            "frequencies": self.frequencies.tolist(),
            "magnitudes": self.magnitudes.tolist(),
            "peak_hz": self.peak_hz.tolist(),
        }


def rule_spectra(temporal_firing: np.ndarray, fs: float) -> RuleSpectra:
    """Spectra of the (S, R) temporal firing matrix sampled at fs Hz."""
    firing = np.asarray(temporal_firing, dtype=np.float64)
    if firing.ndim != 2 or firing.shape[0] < 2:
        raise ValueError(f"need (S >= 2, R) firing, got shape {firing.shape}")
    if fs <= 0:
        raise ValueError(f"fs must be positive, got {fs}")
    s = firing.shape[0]
    centered = firing - firing.mean(axis=0)
    mag = (2.0 / s) * np.abs(np.fft.rfft(centered, axis=0))
    freqs = np.fft.rfftfreq(s, d=1.0 / fs)
    keep = freqs > 0.0
    magnitudes = mag[keep].T
    frequencies = freqs[keep]
    return RuleSpectra(
        frequencies=frequencies,
        magnitudes=magnitudes,
        peak_hz=frequencies[np.argmax(magnitudes, axis=1)],
    )


@dataclass
class ExplainReport:
    """Per-sample interpretability bundle.

    Fields for a filter the model does not have are None; rule_spectra
    additionally requires a sampling rate at report time. Firing matrices
    are raw (rows sum to one); use minmax_normalize for display scaling.
    """

    predicted_class: int
    true_class: int | None
    logits: np.ndarray                            # (M,)
    spatial_firing: np.ndarray | None             # (C, R)
    temporal_firing: np.ndarray | None            # (S, R)
    recovered_spatial_centers: np.ndarray | None  # (R, S)
    recovered_temporal_centers: np.ndarray | None # (R, C)
    spatial_weighted_tokens: np.ndarray | None    # (R, S)
    temporal_weighted_tokens: np.ndarray | None   # (R, C)
    spatial_output: np.ndarray | None             # (C, S) post-spatial features
    rule_spectra: RuleSpectra | None

    @property
    def mean_spatial_firing(self) -> np.ndarray:
        """Average weight each rule gets across channels, unnormalized."""
        if self.spatial_firing is None:
            raise ValueError("model has no spatial filter")
        return self.spatial_firing.mean(axis=0)

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else a.tolist()

        return {
            "predicted_class": int(self.predicted_class),
            "true_class": None if self.true_class is None else int(self.true_class),
            "logits": self.logits.tolist(),
            "spatial_firing": arr(self.spatial_firing),
            "temporal_firing": arr(self.temporal_firing),
            "recovered_spatial_centers": arr(self.recovered_spatial_centers),
            "recovered_temporal_centers": arr(self.recovered_temporal_centers),
            "spatial_weighted_tokens": arr(self.spatial_weighted_tokens),
            "temporal_weighted_tokens": arr(self.temporal_weighted_tokens),
            "spatial_output": arr(self.spatial_output),
            "mean_spatial_firing": (
                None if self.spatial_firing is None
                else self.mean_spatial_firing.tolist()
            ),
            "rule_spectra": (
                None if self.rule_spectra is None else self.rule_spectra.to_dict()
            ),
        }


def _filter_output(filt: FuzzyFilterParams, tokens: np.ndarray,
                   firing: np.ndarray) -> np.ndarray:
    if filt.consequent_mode == FIRST_ORDER:
        per_rule = np.einsum("td,red->rte", tokens, filt.consequents_wv)
        return np.einsum("tr,rte->te", firing, per_rule)
    return firing @ filt.consequents_u


def firing_report(
    params: ModelParams,
    x: np.ndarray,
    true_class: int | None = None,
    fs: float | None = None,
) -> ExplainReport:
    """Inference-mode forward over one (C, S) window, capturing both
    firing matrices, recovered centers, and (given fs) rule spectra."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected one (C, S) window, got shape {x.shape}")
    logits, cache = model_forward(params, x, training=False)

    fields: dict = {
        "spatial_firing": None, "temporal_firing": None,
        "recovered_spatial_centers": None, "recovered_temporal_centers": None,
        "spatial_weighted_tokens": None, "temporal_weighted_tokens": None,
        "spatial_output": None,
    }
    for name, fcache, _ in cache.steps:
        tokens, firing = fcache.tokens[0], fcache.firing[0]
        filt = params.filter_by_name(name)
        fields[f"{name}_firing"] = firing
        fields[f"recovered_{name}_centers"] = recover_centers(filt)
        fields[f"{name}_weighted_tokens"] = firing_weighted_tokens(tokens, firing)
        if name == "spatial":
            fields["spatial_output"] = _filter_output(filt, tokens, firing)

    spectra = None
    if fs is not None and fields["temporal_firing"] is not None:
        spectra = rule_spectra(fields["temporal_firing"], fs)

    return ExplainReport(
        predicted_class=int(np.argmax(logits)),
        true_class=true_class,
        logits=logits,
        rule_spectra=spectra,
        **fields,
    )
