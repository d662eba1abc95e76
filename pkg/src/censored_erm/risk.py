"""Inverse-probability-of-censoring weights and the weighted risk functionals."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .censoring import fit_censoring_estimator
from .data import CensoredDataset, RestrictionDomain, ValidationError

LOSS_VARIANTS = (
    "ipcw",
    "ipcw_loo",
    "ipcw_knn",
    "ipcw_stute",
    "ipcw_oracle",
    "naive",
    "observed",
    "oracle",
)

# (censoring estimator, leave-one-out) behind each IPCW-type loss
_ESTIMATOR_FOR = {
    "ipcw": ("kernel_beran", False),
    "ipcw_loo": ("kernel_beran", True),
    "ipcw_knn": ("knn", True),
    "ipcw_stute": ("unconditional_km", False),
    "ipcw_oracle": ("oracle", False),
}


@dataclass
class WeightVector:
    weights: np.ndarray
    normalized: bool
    source_variant: str
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.weights)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.weights, dtype=dtype)

    def scaled(self, c: float) -> "WeightVector":
        return WeightVector(self.weights * c, False, self.source_variant, dict(self.diagnostics))


def _check_variant(variant: str):
    if variant not in LOSS_VARIANTS:
        raise ValidationError(f"unknown loss variant {variant!r}; choose from {LOSS_VARIANTS}")


def censoring_values(
    data: CensoredDataset,
    variant: str,
    *,
    kernel=None,
    bandwidth="auto",
    n_neighbors: int = 5,
    censoring_survival: Optional[Callable] = None,
    drop_last_jump: bool = True,
    diagnostics: Optional[dict] = None,
) -> np.ndarray:
    """``S_C(time_i- | X_i)`` as used by an IPCW-type loss."""
    est_variant, loo = _ESTIMATOR_FOR[variant]
    if est_variant == "oracle" and censoring_survival is None:
        raise ValidationError(f"{variant} needs the true censoring survival function")
    if loo and data.n < 2:
        raise ValidationError(f"{variant} needs at least two observations")
    if est_variant == "knn":
        # leave-one-out neighbours come from the other n - 1 points
        n_neighbors = min(n_neighbors, data.n - 1) if loo else n_neighbors
    est = fit_censoring_estimator(
        data,
        est_variant,
        kernel=kernel,
        bandwidth=bandwidth,
        n_neighbors=n_neighbors,
        drop_last_jump=drop_last_jump,
        survival=censoring_survival,
    )
    return est.at_training_points(leave_one_out=loo, left_limit=True, diagnostics=diagnostics)


def compute_weights(
    data: CensoredDataset,
    variant: str = "ipcw_knn",
    *,
    domain: Optional[RestrictionDomain] = None,
    normalize: bool = False,
    kernel=None,
    bandwidth="auto",
    n_neighbors: int = 5,
    censoring_survival: Optional[Callable] = None,
    drop_last_jump: bool = True,
) -> WeightVector:
    """Per-observation weights of a loss variant.

    IPCW variants give ``delta_i * 1{(time_i, X_i) in domain} / (n * S_C(time_i- | X_i))``;
    ``naive`` gives ``1/n``, ``observed`` gives ``delta_i / n`` and ``oracle``
    gives ``1/n`` to be paired with the true durations.  An observation whose
    estimated censoring survival is zero gets weight 0 and is counted in
    ``diagnostics['zero_survival']``.
    """
    _check_variant(variant)
    data.require_nonempty()
    n = data.n
    diag: dict = {}
    delta = data.event.astype(float)
    if variant == "oracle" and not data.has_truth:
        raise ValidationError("the oracle loss needs true durations (simulated data only)")
    if variant in _ESTIMATOR_FOR:
        s = censoring_values(
            data,
            variant,
            kernel=kernel,
            bandwidth=bandwidth,
            n_neighbors=n_neighbors,
            censoring_survival=censoring_survival,
            drop_last_jump=drop_last_jump,
            diagnostics=diag,
        )
        num = delta
    else:
        s = np.ones(n)
        num = delta if variant == "observed" else np.ones(n)
    if domain is not None:
        target = data.y_true if variant == "oracle" else data.time
        num = num * domain.contains(target, data.X)
    positive = s > 0
    zero = (num > 0) & ~positive
    if zero.any():
        diag["zero_survival"] = int(zero.sum())
    w = np.zeros(n)
    w[positive] = num[positive] / (n * s[positive])
    if normalize:
        total = w.sum()
        if total > 0:
            w = w / total
    return WeightVector(w, bool(normalize), variant, diag)


def _targets(data: CensoredDataset, w: WeightVector) -> np.ndarray:
    if w.source_variant == "oracle":
        if not data.has_truth:
            raise ValidationError("the oracle loss needs true durations")
        return np.asarray(data.y_true)
    return np.asarray(data.time)


def weighted_risk(data: CensoredDataset, predictions, w: WeightVector) -> float:
    """sum_i w_i (time_i - f_i)^2, with true durations for the oracle loss."""
    f = np.asarray(predictions, dtype=float).reshape(-1)
    if f.shape[0] != data.n or len(w) != data.n:
        raise ValidationError("predictions, weights and data must have the same length")
    r = _targets(data, w) - f
    return float(np.sum(w.weights * r * r))


def linear_risk_estimate(data: CensoredDataset, phi: Callable, w: WeightVector) -> float:
    """Plug-in estimate of ``E[Y phi(X)]``: sum_i w_i time_i phi(X_i)."""
    if len(w) != data.n:
        raise ValidationError("weights and data must have the same length")
    vals = np.broadcast_to(np.asarray(phi(data.X), dtype=float), (data.n,))
    return float(np.sum(w.weights * _targets(data, w) * vals))
