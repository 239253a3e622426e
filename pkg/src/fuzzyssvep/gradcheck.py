"""Finite-difference gradient verification.

central_difference is the generic oracle: it never touches an analytic
backward pass, so tests can compare the two routes independently. The
model-level suite (check_model_gradients) perturbs every parameter group
of a small random model and reports the worst coordinate per group.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# Central differences in double precision: truncation error O(h^2) and
# cancellation noise ~1e-11 at h=1e-5 for O(1) values, comfortably under
# the 1e-4 acceptance threshold.
DEFAULT_H = 1e-5
REL_TOL = 1e-4

# Relative error floor: below this magnitude, absolute error dominates
# finite-difference noise and a pure ratio would be meaningless.
REL_FLOOR = 1e-5


def central_difference(fn: Callable[[], float], arr: np.ndarray, h: float = DEFAULT_H) -> np.ndarray:
    """Numerical gradient of fn with respect to arr, entry by entry.

    arr is perturbed in place and restored; fn() must re-read arr on every
    call (closures over the same array object do).
    """
    grad = np.zeros_like(arr, dtype=np.float64)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + h
        f_plus = fn()
        arr[idx] = orig - h
        f_minus = fn()
        arr[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> tuple[float, tuple]:
    """Worst relative error and its coordinate.

    Per entry: |a - n| / max(|a|, |n|, REL_FLOOR).
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    rel = np.abs(analytic - numeric) / denom
    if rel.size == 0:
        return 0.0, ()
    flat_idx = int(np.argmax(rel))
    idx = np.unravel_index(flat_idx, rel.shape) if rel.ndim else ()
    return float(rel.flat[flat_idx]), tuple(int(i) for i in idx)


@dataclass
class GroupReport:
    """Gradient-check result for one named parameter group."""

    name: str
    max_rel_error: float
    worst_coordinate: tuple
    passed: bool


@dataclass
class GradCheckReport:
    """Full report of a finite-difference run."""

    h: float
    precision: str
    tolerance: float
    groups: list[GroupReport] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.groups)

    @property
    def failed_groups(self) -> list[str]:
        return [g.name for g in self.groups if not g.passed]

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "precision": self.precision,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "groups": [
                {
                    "name": g.name,
                    "max_rel_error": g.max_rel_error,
                    "worst_coordinate": list(g.worst_coordinate),
                    "passed": g.passed,
                }
                for g in self.groups
            ],
        }


def compare_groups(
    analytic: dict[str, np.ndarray],
    loss_fn: Callable[[], float],
    tensors: dict[str, np.ndarray],
    h: float = DEFAULT_H,
    tolerance: float = REL_TOL,
) -> GradCheckReport:
    """Check every named tensor's analytic gradient against central differences.

    Args:
        analytic: gradients keyed like tensors.
        loss_fn: recomputes the scalar loss from the current tensor values.
        tensors: the live parameter arrays (perturbed in place, restored).
    """
    report = GradCheckReport(h=h, precision="float64", tolerance=tolerance)
    for name in sorted(tensors):
        numeric = central_difference(loss_fn, tensors[name], h=h)
        err, coord = relative_error(analytic[name], numeric)
        report.groups.append(
            GroupReport(name=name, max_rel_error=err, worst_coordinate=coord, passed=err < tolerance)
        )
    return report


def small_check_config(consequent_mode: str = "zero_order", dropout_rate: float = 0.0):
    """The standard small instance for end-to-end gradient checks."""
    from .network import ModelConfig

    return ModelConfig(
        n_channels=4, n_samples=32, n_classes=4, n_rules=3, hidden=8,
        dropout_rate=dropout_rate, consequent_mode=consequent_mode,
    )


def check_model_gradients(
    config=None,
    seed: int = 0,
    h: float = DEFAULT_H,
    tolerance: float = REL_TOL,
    corrupt: Callable[[dict], None] | None = None,
) -> GradCheckReport:
    """Finite-difference check of model_backward on a random small model.

    With dropout_rate > 0 every loss evaluation re-seeds the mask RNG
    identically, so the checked function stays deterministic. corrupt, if
    given, mutates the analytic gradients before comparison (negative
    control: a corrupted group must be reported as failed).
    """
    from .network import cross_entropy, init_model, model_backward, model_forward

    if config is None:
        config = small_check_config()
    params = init_model(config, seed=seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFD]))
    x = rng.standard_normal((config.n_channels, config.n_samples))
    label = int(rng.integers(config.n_classes))
    mask_seed = int(rng.integers(2**63 - 1))
    training = config.dropout_rate > 0.0

    def forward():
        mask_rng = np.random.default_rng(mask_seed) if training else None
        return model_forward(params, x, training=training, rng=mask_rng)

    _, cache = forward()
    analytic, d_x = model_backward(cache, label, with_input_grad=True)
    analytic["tokens"] = d_x
    if corrupt is not None:
        corrupt(analytic)

    def loss_fn() -> float:
        logits, _ = forward()
        return cross_entropy(logits, label).value

    # The input window joins the parameter groups: perturbing x in place
    # flows through forward() just like a parameter does.
    checked = params.tensors() | {"tokens": x}
    return compare_groups(analytic, loss_fn, checked, h=h, tolerance=tolerance)
