"""Model assembly: stacked fuzzy filters, MLP head, loss, and gradients.

The model consumes a (C, S) window: a spatial filter treats the C
channels as tokens of width S, the result is transposed so a temporal
filter treats the S time points as tokens of width C, the output is
flattened, and a 2-layer ReLU MLP with inverted dropout maps it to M
class logits. filter_order rewires this chain for ablations; feature_mode
only changes what S means (time samples vs spectral bins), the network
itself is agnostic.

Parameters live in named float64 tensors (see ModelParams.tensors());
gradients, optimizer state, and checkpoints all share those names.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dataio import CheckpointHeader, read_checkpoint_raw, write_checkpoint_raw
from .errors import ConfigError, FormatError
from .fuzzy import (
    FIRST_ORDER,
    ZERO_ORDER,
    FilterCache,
    FuzzyFilterParams,
    LinearMap,
    _softmax_rows,
    filter_backward,
    filter_forward,
    init_filter,
)

SPATIAL_FIRST = "spatial_first"
TEMPORAL_FIRST = "temporal_first"
SPATIAL_ONLY = "spatial_only"
TEMPORAL_ONLY = "temporal_only"
FILTER_ORDERS = (SPATIAL_FIRST, TEMPORAL_FIRST, SPATIAL_ONLY, TEMPORAL_ONLY)

TIME_DOMAIN = "time_domain"
FFT = "fft"
FEATURE_MODES = (TIME_DOMAIN, FFT)

CONSEQUENT_CODES = {ZERO_ORDER: 0, FIRST_ORDER: 1}
FILTER_ORDER_CODES = {name: i for i, name in enumerate(FILTER_ORDERS)}
FEATURE_MODE_CODES = {name: i for i, name in enumerate(FEATURE_MODES)}


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    n_samples is the token width seen by the spatial filter: window
    samples in time_domain mode, spectral bins in fft mode.
    """

    n_channels: int
    n_samples: int
    n_classes: int
    n_rules: int = 10
    hidden: int = 128
    dropout_rate: float = 0.3
    consequent_mode: str = ZERO_ORDER
    filter_order: str = SPATIAL_FIRST
    feature_mode: str = TIME_DOMAIN

    def __post_init__(self):
        if min(self.n_channels, self.n_samples, self.n_classes) < 1:
            raise ConfigError(f"nonpositive dimension in {self}")
        if not 1 <= self.n_rules <= 64:
            raise ConfigError(f"n_rules must be in [1, 64], got {self.n_rules}")
        if self.hidden < 1:
            raise ConfigError(f"hidden must be >= 1, got {self.hidden}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.consequent_mode not in CONSEQUENT_CODES:
            raise ConfigError(f"unknown consequent_mode {self.consequent_mode!r}")
        if self.filter_order not in FILTER_ORDER_CODES:
            raise ConfigError(f"unknown filter_order {self.filter_order!r}")
        if self.feature_mode not in FEATURE_MODE_CODES:
            raise ConfigError(f"unknown feature_mode {self.feature_mode!r}")

    @property
    def uses_spatial(self) -> bool:
        return self.filter_order != TEMPORAL_ONLY

    @property
    def uses_temporal(self) -> bool:
        return self.filter_order != SPATIAL_ONLY

    # (filter name, transpose tokens before applying) pairs, in order.
    @property
    def chain(self) -> tuple[tuple[str, bool], ...]:
        return {
            SPATIAL_FIRST: (("spatial", False), ("temporal", True)),
            TEMPORAL_FIRST: (("temporal", True), ("spatial", True)),
            SPATIAL_ONLY: (("spatial", False),),
            TEMPORAL_ONLY: (("temporal", True),),
        }[self.filter_order]


@dataclass
class ModelParams:
    """All learnable tensors plus the architecture they belong to.

    Filters skipped by filter_order are None and contribute no parameters.
    """

    config: ModelConfig
    spatial: FuzzyFilterParams | None
    temporal: FuzzyFilterParams | None
    mlp_w1: np.ndarray
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray
    mlp_b2: np.ndarray

    def __post_init__(self):
        cfg = self.config
        if cfg.uses_spatial != (self.spatial is not None):
            raise ConfigError(f"filter_order {cfg.filter_order} vs spatial={self.spatial is not None}")
        if cfg.uses_temporal != (self.temporal is not None):
            raise ConfigError(f"filter_order {cfg.filter_order} vs temporal={self.temporal is not None}")
        if self.spatial is not None and self.spatial.dim != cfg.n_samples:
            raise ConfigError(
                f"spatial filter dim {self.spatial.dim} != n_samples {cfg.n_samples}"
            )
        if self.temporal is not None and self.temporal.dim != cfg.n_channels:
            raise ConfigError(
                f"temporal filter dim {self.temporal.dim} != n_channels {cfg.n_channels}"
            )
        flat = cfg.n_channels * cfg.n_samples
        self.mlp_w1 = np.asarray(self.mlp_w1, dtype=np.float64)
        self.mlp_b1 = np.asarray(self.mlp_b1, dtype=np.float64)
        self.mlp_w2 = np.asarray(self.mlp_w2, dtype=np.float64)
        self.mlp_b2 = np.asarray(self.mlp_b2, dtype=np.float64)
        expected = {
            "mlp_w1": (flat, cfg.hidden), "mlp_b1": (cfg.hidden,),
            "mlp_w2": (cfg.hidden, cfg.n_classes), "mlp_b2": (cfg.n_classes,),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ConfigError(f"{name} shape {arr.shape}, expected {shape}")

    def tensors(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        if self.spatial is not None:
            out.update({f"spatial.{k}": v for k, v in self.spatial.tensors().items()})
        if self.temporal is not None:
            out.update({f"temporal.{k}": v for k, v in self.temporal.tensors().items()})
        out["mlp_w1"] = self.mlp_w1
        out["mlp_b1"] = self.mlp_b1
        out["mlp_w2"] = self.mlp_w2
        out["mlp_b2"] = self.mlp_b2
        return out

    def filter_by_name(self, name: str) -> FuzzyFilterParams:
        filt = self.spatial if name == "spatial" else self.temporal
        assert filt is not None, f"{name} filter not present in this model"
        return filt


def init_model(config: ModelConfig, seed=0) -> ModelParams:
    """Random model: filters via init_filter, MLP uniform in +-1/sqrt(fan_in)."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seq_spatial, seq_temporal, seq_mlp = root.spawn(3)
    spatial = (
        init_filter(config.n_samples, config.n_rules, config.consequent_mode, seq_spatial)
        if config.uses_spatial else None
    )
    temporal = (
        init_filter(config.n_channels, config.n_rules, config.consequent_mode, seq_temporal)
        if config.uses_temporal else None
    )
    rng = np.random.default_rng(seq_mlp)
    flat = config.n_channels * config.n_samples
    bound1 = 1.0 / np.sqrt(flat)
    bound2 = 1.0 / np.sqrt(config.hidden)
    return ModelParams(
        config=config,
        spatial=spatial,
        temporal=temporal,
        mlp_w1=rng.uniform(-bound1, bound1, (flat, config.hidden)),
        mlp_b1=np.zeros(config.hidden),
        mlp_w2=rng.uniform(-bound2, bound2, (config.hidden, config.n_classes)),
        mlp_b2=np.zeros(config.n_classes),
    )


@dataclass
class ModelCache:
    """Intermediates from model_forward needed by model_backward."""

    params: ModelParams
    steps: list[tuple[str, FilterCache, bool]]
    filtered_shape: tuple
    flat: np.ndarray
    pre_relu: np.ndarray
    hidden: np.ndarray          # post-ReLU, post-dropout
    dropout_mask: np.ndarray | None
    logits: np.ndarray          # (B, M)
    batched: bool
    training: bool


def model_forward(
    params: ModelParams,
    x: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ModelCache]:
    """Logits for one window (C, S) or a batch (B, C, S).

    With training=False no RNG is consumed and the result is deterministic.
    Dropout requires an rng when training=True and dropout_rate > 0.
    """
    cfg = params.config
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 3
    if not batched:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (cfg.n_channels, cfg.n_samples):
        raise ValueError(
            f"input shape {x.shape[1:] if x.ndim == 3 else x.shape} does not match "
            f"(C, S) = ({cfg.n_channels}, {cfg.n_samples})"
        )
    cur = x
    steps: list[tuple[str, FilterCache, bool]] = []
    for name, transpose in cfg.chain:
        if transpose:
            cur = np.swapaxes(cur, 1, 2)
        cur, fcache = filter_forward(params.filter_by_name(name), cur)
        steps.append((name, fcache, transpose))
    filtered_shape = cur.shape
    flat = cur.reshape(cur.shape[0], -1)

    pre_relu = flat @ params.mlp_w1 + params.mlp_b1
    hidden = np.maximum(pre_relu, 0.0)
    mask = None
    if training and cfg.dropout_rate > 0.0:
        if rng is None:
            raise ValueError("training with dropout_rate > 0 requires an rng")
        keep = 1.0 - cfg.dropout_rate
        mask = (rng.random(hidden.shape) < keep) / keep
        hidden = hidden * mask
    logits = hidden @ params.mlp_w2 + params.mlp_b2

    cache = ModelCache(
        params=params, steps=steps, filtered_shape=filtered_shape, flat=flat,
        pre_relu=pre_relu, hidden=hidden, dropout_mask=mask, logits=logits,
        batched=batched, training=training,
    )
    return (logits if batched else logits[0]), cache


@dataclass
class LossRecord:
    """Cross-entropy evaluation for one sample: value in nats, softmax
    probabilities, and the one-hot target."""

    value: float
    probabilities: np.ndarray
    target: np.ndarray


def cross_entropy(logits: np.ndarray, label: int) -> LossRecord:
    """Stabilized softmax cross-entropy for a single logit vector."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise ValueError(f"expected a logit vector, got shape {logits.shape}")
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"label {label} out of range [0, {logits.shape[0]})")
    probs = _softmax_rows(logits[None])[0]
    shifted = logits - logits.max()
    value = float(np.log(np.sum(np.exp(shifted))) - shifted[label])
    target = np.zeros_like(logits)
    target[label] = 1.0
    return LossRecord(value=value, probabilities=probs, target=target)


def batch_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over a batch; returns (value, probabilities)."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=1))
    value = float(np.mean(lse - shifted[np.arange(len(labels)), labels]))
    return value, _softmax_rows(logits)


def model_backward(cache: ModelCache, labels, with_input_grad: bool = False):
    """Gradients of the (mean) cross-entropy w.r.t. every named tensor.

    labels is an int for an unbatched forward, or an array of length B for
    a batched one (the loss is then the batch mean). Requires a cache from
    a training=True forward when dropout is active. With with_input_grad
    the return value is (grads, d_x) where d_x matches the input's shape.
    """
    params = cache.params
    cfg = params.config
    b = cache.logits.shape[0]
    if np.isscalar(labels) or np.ndim(labels) == 0:
        if cache.batched:
            raise ValueError("scalar label for a batched forward cache")
        labels = np.array([labels])
    else:
        labels = np.asarray(labels)
        if labels.shape != (b,):
            raise ValueError(f"labels shape {labels.shape} does not match batch {b}")
    if cfg.dropout_rate > 0.0 and not cache.training:
        raise ValueError("backward requires a training=True forward cache when dropout is active")

    probs = _softmax_rows(cache.logits)
    d_logits = probs.copy()
    d_logits[np.arange(b), labels] -= 1.0
    if cache.batched:
        d_logits /= b

    grads: dict[str, np.ndarray] = {}
    grads["mlp_w2"] = cache.hidden.T @ d_logits
    grads["mlp_b2"] = d_logits.sum(axis=0)
    d_hidden = d_logits @ params.mlp_w2.T
    if cache.dropout_mask is not None:
        d_hidden = d_hidden * cache.dropout_mask
    d_pre = d_hidden * (cache.pre_relu > 0.0)
    grads["mlp_w1"] = cache.flat.T @ d_pre
    grads["mlp_b1"] = d_pre.sum(axis=0)
    d_cur = (d_pre @ params.mlp_w1.T).reshape(cache.filtered_shape)

    for name, fcache, transpose in reversed(cache.steps):
        d_cur, fgrads = filter_backward(fcache, d_cur)
        for key, val in fgrads.items():
            grads[f"{name}.{key}"] = val
        if transpose:
            d_cur = np.swapaxes(d_cur, 1, 2)
    if with_input_grad:
        return grads, (d_cur if cache.batched else d_cur[0])
    return grads


def param_count(params: ModelParams) -> int:
    """Total number of learnable scalars."""
    return int(sum(t.size for t in params.tensors().values()))


def check_compatible(config: ModelConfig, n_channels: int, n_features: int) -> None:
    """Raise when a model and a data source disagree on input shape."""
    if config.n_channels != n_channels or config.n_samples != n_features:
        raise ConfigError(
            f"model expects (C, S) = ({config.n_channels}, {config.n_samples}) "
            f"but data provides ({n_channels}, {n_features})"
        )


def _header_from_config(cfg: ModelConfig) -> CheckpointHeader:
    return CheckpointHeader(
        n_channels=cfg.n_channels, n_samples=cfg.n_samples, n_classes=cfg.n_classes,
        n_rules=cfg.n_rules, hidden=cfg.hidden, dropout=cfg.dropout_rate,
        consequent_mode=CONSEQUENT_CODES[cfg.consequent_mode],
        filter_order=FILTER_ORDER_CODES[cfg.filter_order],
        feature_mode=FEATURE_MODE_CODES[cfg.feature_mode],
    )


def _config_from_header(h: CheckpointHeader) -> ModelConfig:
    consequent = {v: k for k, v in CONSEQUENT_CODES.items()}[h.consequent_mode]
    return ModelConfig(
        n_channels=h.n_channels, n_samples=h.n_samples, n_classes=h.n_classes,
        n_rules=h.n_rules, hidden=h.hidden, dropout_rate=h.dropout,
        consequent_mode=consequent,
        filter_order=FILTER_ORDERS[h.filter_order],
        feature_mode=FEATURE_MODES[h.feature_mode],
    )


def save_checkpoint(params: ModelParams, path) -> None:
    """Serialize config and all named tensors; load(save(p)) is bit-identical."""
    write_checkpoint_raw(path, _header_from_config(params.config), params.tensors())


def _filter_from_tensors(prefix: str, tensors: dict[str, np.ndarray], mode: str, path) -> FuzzyFilterParams:
    def grab(key: str) -> np.ndarray:
        full = f"{prefix}.{key}"
        if full not in tensors:
            raise FormatError(f"{path}: missing tensor {full!r}")
        return tensors.pop(full)

    consequent_key = "consequents_u" if mode == ZERO_ORDER else "consequents_wv"
    kwargs = {consequent_key: grab(consequent_key)}
    try:
        return FuzzyFilterParams(
            query=LinearMap(W=grab("query_w"), b=grab("query_b")),
            centers=grab("centers"), widths=grab("widths"),
            consequent_mode=mode, **kwargs,
        )
    except ConfigError as exc:
        raise FormatError(f"{path}: inconsistent {prefix} filter tensors: {exc}") from exc


def load_checkpoint(path) -> ModelParams:
    """Read an IFZT file back into ModelParams.

    Tensor shapes are validated against the header; missing, extra, or
    misshapen tensors raise FormatError naming the offender.
    """
    header, tensors = read_checkpoint_raw(path)
    cfg = _config_from_header(header)
    spatial = (
        _filter_from_tensors("spatial", tensors, cfg.consequent_mode, path)
        if cfg.uses_spatial else None
    )
    temporal = (
        _filter_from_tensors("temporal", tensors, cfg.consequent_mode, path)
        if cfg.uses_temporal else None
    )
    mlp = {}
    for name in ("mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2"):
        if name not in tensors:
            raise FormatError(f"{path}: missing tensor {name!r}")
        mlp[name] = tensors.pop(name)
    if tensors:
        raise FormatError(f"{path}: unexpected tensors {sorted(tensors)}")
    try:
        return ModelParams(config=cfg, spatial=spatial, temporal=temporal, **mlp)
    except ConfigError as exc:
        raise FormatError(f"{path}: tensors inconsistent with header: {exc}") from exc
