"""Fuzzy attention filter: forward and exact reverse-mode backward.

A filter holds R fuzzy rules over tokens of width D. Each token x is
projected to a query q = W_Q x + b_Q; rule r scores it with the Gaussian
membership logit

    l_r = -sum_d (q_d - m_{r,d})^2 / (2 sigma_{r,d}^2)

and the firing strengths are softmax(l) across rules, so every token
distributes one unit of attention over the rule bank. The output is the
firing-weighted combination of rule consequents:

    zero_order:  out_t = sum_r f_{t,r} u_r            (u_r a learned vector)
    first_order: out_t = sum_r f_{t,r} W_r^V x_t      (per-rule matrix)

Output shape equals input shape, which lets two filters be stacked with a
transpose in between (channels-as-tokens, then time-points-as-tokens).

All arrays are float64. The public functions take a single token matrix
(T, D); a leading batch axis (B, T, D) is also accepted and carried
through forward/backward unchanged, with parameter gradients summed over
the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError

# Widths are clamped to this floor after every optimizer step; construction
# enforces it too so the logit scale 1/(2 sigma^2) stays bounded.
SIGMA_FLOOR = 1e-3

ZERO_ORDER = "zero_order"
FIRST_ORDER = "first_order"


@dataclass
class LinearMap:
    """Affine map y = W x + b with W of shape (D_out, D_in)."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ConfigError(
                f"inconsistent linear map shapes W{self.W.shape} b{self.b.shape}"
            )
        if not (np.isfinite(self.W).all() and np.isfinite(self.b).all()):
            raise NumericError("linear map contains non-finite entries")


@dataclass
class FuzzyFilterParams:
    """Learnable state of one filter.

    centers and widths have shape (R, D). Exactly one consequent tensor is
    set: consequents_u (R, D) in zero_order mode, consequents_wv (R, D, D)
    in first_order mode. The query map must be square (D, D) so that center
    recovery through its (pseudo)inverse is well defined.
    """

    query: LinearMap
    centers: np.ndarray
    widths: np.ndarray
    consequent_mode: str = ZERO_ORDER
    consequents_u: np.ndarray | None = None
    consequents_wv: np.ndarray | None = None

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        self.widths = np.asarray(self.widths, dtype=np.float64)
        d_out, d_in = self.query.W.shape
        if d_out != d_in:
            raise ConfigError(f"query map must be square, got {self.query.W.shape}")
        r, d = self.centers.shape if self.centers.ndim == 2 else (0, -1)
        if r < 1 or d != d_in:
            raise ConfigError(
                f"centers shape {self.centers.shape} incompatible with query dim {d_in}"
            )
        if self.widths.shape != (r, d):
            raise ConfigError(
                f"widths shape {self.widths.shape} does not match centers {(r, d)}"
            )
        if np.any(self.widths < SIGMA_FLOOR):
            raise ConfigError(f"widths below the {SIGMA_FLOOR} floor")
        if self.consequent_mode == ZERO_ORDER:
            if self.consequents_u is None or self.consequents_wv is not None:
                raise ConfigError("zero_order mode requires consequents_u only")
            self.consequents_u = np.asarray(self.consequents_u, dtype=np.float64)
            if self.consequents_u.shape != (r, d):
                raise ConfigError(
                    f"consequents_u shape {self.consequents_u.shape}, expected {(r, d)}"
                )
        elif self.consequent_mode == FIRST_ORDER:
            if self.consequents_wv is None or self.consequents_u is not None:
                raise ConfigError("first_order mode requires consequents_wv only")
            self.consequents_wv = np.asarray(self.consequents_wv, dtype=np.float64)
            if self.consequents_wv.shape != (r, d, d):
                raise ConfigError(
                    f"consequents_wv shape {self.consequents_wv.shape}, expected {(r, d, d)}"
                )
        else:
            raise ConfigError(f"unknown consequent_mode {self.consequent_mode!r}")

    @property
    def n_rules(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        """Named learnable tensors; the keys are shared by gradients,
        optimizer state, and checkpoints."""
        out = {
            "query_w": self.query.W,
            "query_b": self.query.b,
            "centers": self.centers,
            "widths": self.widths,
        }
        if self.consequent_mode == ZERO_ORDER:
            out["consequents_u"] = self.consequents_u
        else:
            out["consequents_wv"] = self.consequents_wv
        return out


@dataclass
class FiringMatrix:
    """Row-stochastic firing strengths, shape (T, R): rows sum to one."""

    values: np.ndarray


@dataclass
class FilterCache:
    """Intermediates retained by filter_forward for the backward pass."""

    params: FuzzyFilterParams
    tokens: np.ndarray   # (B, T, D)
    queries: np.ndarray  # (B, T, D)
    firing: np.ndarray   # (B, T, R)
    batched_input: bool
    # first_order only: per-token rule projections, flat (B*T, R*D).
    # Kept so backward does not redo the largest GEMM of the forward.
    proj: np.ndarray | None = None


def _as_batched(tokens: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim == 2:
        batched = False
        tokens = tokens[None]
    elif tokens.ndim == 3:
        batched = True
    else:
        raise ValueError(f"{what} must be (T, D) or (B, T, D), got {tokens.shape}")
    if tokens.shape[-1] != dim:
        raise ValueError(f"{what} width {tokens.shape[-1]} != filter dim {dim}")
    return tokens, batched


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _firing_batched(params: FuzzyFilterParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Queries and firing for batched tokens x (B, T, D)."""
    if not np.isfinite(x).all():
        raise NumericError("filter input contains non-finite values")
    q = x @ params.query.W.T + params.query.b
    # Logits as three GEMMs: -(q^2 A^T - 2 q (m A)^T + sum_d m^2 A), A = 1/(2 sigma^2).
    a = 1.0 / (2.0 * params.widths**2)
    ma = params.centers * a
    const = np.sum(params.centers * ma, axis=1)
    logits = -(q**2) @ a.T + 2.0 * (q @ ma.T) - const
    return q, _softmax_rows(logits)


def firing_strengths(params: FuzzyFilterParams, tokens: np.ndarray) -> FiringMatrix:
    """Firing strengths for a token matrix (T, D) -> (T, R).

    Softmax is computed with max-logit subtraction, so a uniform shift of a
    token's rule logits leaves its row unchanged and no overflow occurs.
    """
    x, batched = _as_batched(tokens, params.dim, "tokens")
    if batched:
        raise ValueError("firing_strengths takes a single token matrix (T, D)")
    _, firing = _firing_batched(params, x)
    return FiringMatrix(values=firing[0])


def filter_forward(
    params: FuzzyFilterParams, tokens: np.ndarray
) -> tuple[np.ndarray, FilterCache]:
    """Apply the filter; output shape equals input shape.

    Returns the output and a cache for filter_backward. Accepts (T, D) or
    batched (B, T, D) tokens.
    """
    x, batched = _as_batched(tokens, params.dim, "tokens")
    q, firing = _firing_batched(params, x)
    proj = None
    if params.consequent_mode == ZERO_ORDER:
        out = firing @ params.consequents_u
    else:
        # out_t = sum_r f_{t,r} (W_r^V x_t). One flat GEMM builds every
        # rule's projection of every token; the firing mix is elementwise.
        b_sz, t_len, d = x.shape
        wv = params.consequents_wv
        n_rules = wv.shape[0]
        proj = x.reshape(-1, d) @ wv.reshape(-1, d).T          # (B*T, R*D)
        mixed = proj.reshape(-1, n_rules, d) * firing.reshape(-1, n_rules)[:, :, None]
        out = mixed.sum(axis=1).reshape(b_sz, t_len, d)
    cache = FilterCache(
        params=params, tokens=x, queries=q, firing=firing,
        batched_input=batched, proj=proj,
    )
    return (out if batched else out[0]), cache


def filter_backward(
    cache: FilterCache, d_output: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Exact gradients of a scalar loss through the filter.

    Args:
        cache: result of the matching filter_forward call.
        d_output: loss gradient w.r.t. the filter output, same shape as
            that output.

    Returns:
        (d_tokens, d_params) where d_params maps the keys of
        params.tensors() to arrays of matching shape (summed over the
        batch when the forward input was batched).
    """
    params = cache.params
    x, q, f = cache.tokens, cache.queries, cache.firing
    dy, batched = _as_batched(d_output, params.dim, "d_output")
    if batched != cache.batched_input or dy.shape != x.shape:
        raise ValueError(
            f"d_output shape {np.asarray(d_output).shape} does not match "
            f"forward tokens {x.shape if cache.batched_input else x.shape[1:]}"
        )

    grads: dict[str, np.ndarray] = {}
    if params.consequent_mode == ZERO_ORDER:
        # out = F @ U
        grads["consequents_u"] = np.einsum("btr,btd->rd", f, dy, optimize=True)
        df = dy @ params.consequents_u.T
        dx = np.zeros_like(x)
    else:
        b_sz, t_len, d = x.shape
        wv = params.consequents_wv
        n_rules = wv.shape[0]
        dyf = dy.reshape(-1, d)
        proj3 = cache.proj.reshape(-1, n_rules, d)
        df = (proj3 * dyf[:, None, :]).sum(axis=-1).reshape(b_sz, t_len, n_rules)
        fdy = (f.reshape(-1, n_rules)[:, :, None] * dyf[:, None, :]).reshape(-1, n_rules * d)
        grads["consequents_wv"] = (fdy.T @ x.reshape(-1, d)).reshape(n_rules, d, d)
        dx = (fdy @ wv.reshape(-1, d)).reshape(b_sz, t_len, d)

    # Softmax backward per row: dL = F * (dF - sum_r F dF).
    dl = f * (df - np.sum(f * df, axis=-1, keepdims=True))

    # Logit gradients, GEMM-factored. With A = 1/(2 sigma^2), B = 1/sigma^2:
    #   dQ   = -Q * (dL @ B) + dL @ (m B)
    #   dm   = B * ((dL^T Q) - m * colsum(dL))
    #   dsig = sigma^{-3} * ((dL^T Q^2) - 2 m (dL^T Q) + m^2 colsum(dL))
    sig = params.widths
    b_mat = 1.0 / sig**2
    mb = params.centers * b_mat
    dq = -q * (dl @ b_mat) + dl @ mb
    dlt_q = np.einsum("btr,btd->rd", dl, q, optimize=True)
    dlt_q2 = np.einsum("btr,btd->rd", dl, q**2, optimize=True)
    col = np.sum(dl, axis=(0, 1))[:, None]
    grads["centers"] = b_mat * (dlt_q - params.centers * col)
    grads["widths"] = (dlt_q2 - 2.0 * params.centers * dlt_q + params.centers**2 * col) / sig**3

    grads["query_w"] = np.einsum("btd,bte->de", dq, x, optimize=True)
    grads["query_b"] = np.sum(dq, axis=(0, 1))
    dx = dx + dq @ params.query.W

    return (dx if batched else dx[0]), grads


def init_filter(dim: int, n_rules: int, consequent_mode: str = ZERO_ORDER, seed=0) -> FuzzyFilterParams:
    """Random initialization, deterministic per seed.

    Query weights ~ U[-1/sqrt(D), 1/sqrt(D)] with zero bias; centers
    ~ N(0, 0.5^2); widths all 1; zero_order consequents ~ N(0, 0.02^2);
    first_order consequents are identity plus N(0, 0.02^2) noise.
    """
    if dim < 1 or n_rules < 1:
        raise ConfigError(f"need dim >= 1 and n_rules >= 1, got {dim}, {n_rules}")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(dim)
    query = LinearMap(W=rng.uniform(-bound, bound, (dim, dim)), b=np.zeros(dim))
    centers = rng.normal(0.0, 0.5, (n_rules, dim))
    widths = np.ones((n_rules, dim))
    if consequent_mode == ZERO_ORDER:
        return FuzzyFilterParams(
            query=query, centers=centers, widths=widths,
            consequent_mode=ZERO_ORDER,
            consequents_u=rng.normal(0.0, 0.02, (n_rules, dim)),
        )
    if consequent_mode == FIRST_ORDER:
        wv = np.eye(dim)[None] + rng.normal(0.0, 0.02, (n_rules, dim, dim))
        return FuzzyFilterParams(
            query=query, centers=centers, widths=widths,
            consequent_mode=FIRST_ORDER, consequents_wv=wv,
        )
    raise ConfigError(f"unknown consequent_mode {consequent_mode!r}")
