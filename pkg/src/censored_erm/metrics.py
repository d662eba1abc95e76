"""Test-set error, concordance, and risk-estimation error."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .data import CensoredDataset, ValidationError
from .risk import compute_weights, linear_risk_estimate


class UndefinedMetric(ValueError):
    """No comparable pair exists, so the concordance index is undefined."""


@dataclass
class EvaluationReport:
    l2_error: float
    rmse: float
    concordance: Optional[float]
    n_test: int
    l2_total: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "l2_error": self.l2_error,
            "l2_total": self.l2_total,
            "rmse": self.rmse,
            "concordance": self.concordance,
            "n_test": self.n_test,
            "diagnostics": dict(self.diagnostics),
        }


def _predictions(model, X):
    return np.asarray(model.predict(X) if hasattr(model, "predict") else model(X), dtype=float)


def l2_test_error(model, X, y) -> float:
    """Mean squared error of ``model`` on fully observed test data."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size == 0:
        raise ValidationError("empty test set")
    r = y - _predictions(model, X)
    return float(np.mean(r * r))


def concordance_counts(pred, time, event):
    """Counts over comparable pairs ``(i, j)`` with ``event_i`` and ``time_j > time_i``.

    Returns ``(concordant, tied, comparable)``: a pair is concordant when
    ``pred_i < pred_j`` (shorter observed duration, shorter prediction).
    """
    pred = np.asarray(pred, dtype=float)
    time = np.asarray(time, dtype=float)
    order = np.argsort(time, kind="stable")
    p, t, e = pred[order], time[order], np.asarray(event, dtype=bool)[order]
    conc = ties = comp = 0
    for i in np.flatnonzero(e):
        later = t > t[i]
        pj = p[later]
        comp += pj.size
        conc += int(np.count_nonzero(p[i] < pj))
        ties += int(np.count_nonzero(p[i] == pj))
    return conc, ties, comp


def concordance_index(model, test: CensoredDataset, diagnostics: Optional[dict] = None) -> float:
    """Harrell's concordance: comparable pairs correctly ordered, ties count one half.

    ``diagnostics`` receives the pair count, the number of uncensored
    anchors, and the concordant count divided by that number.
    """
    pred = _predictions(model, test.X)
    conc, ties, comp = concordance_counts(pred, test.time, test.event)
    if comp == 0:
        raise UndefinedMetric("no comparable pairs in the test set")
    if diagnostics is not None:
        n_events = int(np.count_nonzero(test.event))
        diagnostics.update(
            comparable_pairs=comp,
            n_uncensored=n_events,
            concordance_per_event=conc / n_events,
        )
    return (conc + 0.5 * ties) / comp


def evaluate_model(model, test: CensoredDataset, metrics=("l2", "concordance")) -> EvaluationReport:
    """Score ``model`` on ``test``; L2 uses true durations when present."""
    diag: dict = {}
    y = test.y_true if test.has_truth else test.time
    if "l2" in metrics:
        if not test.has_truth and not np.all(test.event):
            diag["l2_on_censored_times"] = int(np.count_nonzero(~test.event))
        l2 = l2_test_error(model, test.X, y)
    else:
        l2 = math.nan
    conc = None
    if "concordance" in metrics:
        try:
            conc = concordance_index(model, test, diag)
        except UndefinedMetric:
            diag["concordance_undefined"] = 1
    return EvaluationReport(l2, math.sqrt(l2) if l2 == l2 else math.nan, conc, test.n, l2 * test.n, diag)


def risk_estimation_error(data: CensoredDataset, variant: str, phi: Callable, true_risk: float, **weight_params) -> float:
    """|estimate of E[Y phi(X)] with normalized weights - true_risk|."""
    w = compute_weights(data, variant, normalize=True, **weight_params)
    return abs(linear_risk_estimate(data, phi, w) - true_risk)
