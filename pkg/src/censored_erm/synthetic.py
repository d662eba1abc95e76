"""Synthetic proportional-hazards data with informative censoring.

Covariates are uniform on the unit cube.  Given ``X = x`` the duration is
exponential with rate ``exp(beta . x)`` and the censoring time exponential
with rate ``exp(lambda * beta_c . x)``, where ``beta = (1, ..., 1, 0, ..., 0)``
(``ceil(d/2)`` ones) and ``beta_c = (1, 0, 1, 0, ...)``.  ``lambda`` sets the
censoring level; the event rate ``p = E[delta]`` decreases in ``lambda`` and
negative values are allowed so that mild censoring can be reached.

Randomness comes from numpy's PCG64 generator seeded through
``numpy.random.SeedSequence``, which is portable across platforms.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List

import numpy as np

from .data import CensoredDataset, ValidationError

log = logging.getLogger(__name__)

LAMBDA_BRACKET = (-10.0, 10.0)


class CalibrationError(RuntimeError):
    """The requested event rate cannot be reached inside the search bracket."""


def default_beta(d: int) -> np.ndarray:
    k = math.ceil(d / 2)
    return np.r_[np.ones(k), np.zeros(d - k)]


def default_beta_c(d: int) -> np.ndarray:
    return (np.arange(d) % 2 == 0).astype(float)


@dataclass(frozen=True)
class CoxModel:
    d: int
    lambda_scale: float = 1.0
    beta: np.ndarray = None
    beta_c: np.ndarray = None

    def __post_init__(self):
        if self.d < 1:
            raise ValidationError("dimension must be >= 1")
        beta = default_beta(self.d) if self.beta is None else np.asarray(self.beta, dtype=float)
        beta_c = default_beta_c(self.d) if self.beta_c is None else np.asarray(self.beta_c, dtype=float)
        if beta.shape != (self.d,) or beta_c.shape != (self.d,):
            raise ValidationError("beta and beta_c must have length d")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "beta_c", beta_c)
        object.__setattr__(self, "lambda_scale", float(self.lambda_scale))

    def with_lambda(self, lam: float) -> "CoxModel":
        return CoxModel(self.d, lam, self.beta, self.beta_c)

    def event_rate(self, X) -> np.ndarray:
        return np.exp(np.asarray(X, dtype=float) @ self.beta)

    def censoring_rate(self, X) -> np.ndarray:
        return np.exp(self.lambda_scale * (np.asarray(X, dtype=float) @ self.beta_c))

    def duration_survival(self, t, X) -> np.ndarray:
        return np.exp(-self.event_rate(X) * np.asarray(t, dtype=float))

    def censoring_survival(self, t, X) -> np.ndarray:
        """S_C(t | x); continuous, so it equals its left limit."""
        return np.exp(-self.censoring_rate(X) * np.asarray(t, dtype=float))

    def regression_function(self, X) -> np.ndarray:
        """E[Y | X = x] = exp(-beta . x)."""
        return 1.0 / self.event_rate(X)


@dataclass(frozen=True)
class GeneratedSample:
    x: np.ndarray
    y_true: float
    c: float
    y_tilde: float
    delta: bool

    def __post_init__(self):
        assert self.y_tilde == min(self.y_true, self.c)
        assert self.delta == (self.y_true <= self.c)


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator from an integer seed or a ``SeedSequence``."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.PCG64(seed))


def _draw(model: CoxModel, n: int, rng: np.random.Generator):
    X = rng.random((n, model.d))
    u = rng.random((2, n))
    # inverse-CDF sampling; 1 - U avoids log(0)
    y = -np.log1p(-u[0]) / model.event_rate(X)
    c = -np.log1p(-u[1]) / model.censoring_rate(X)
    return X, y, c


def generate_dataset(model: CoxModel, n: int, seed) -> CensoredDataset:
    """Draw ``n`` censored observations; truth columns are attached."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    X, y, c = _draw(model, n, make_rng(seed))
    return CensoredDataset(X, np.minimum(y, c), y <= c, y_true=y, c=c)


def generate(model: CoxModel, n: int, seed) -> List[GeneratedSample]:
    data = generate_dataset(model, n, seed)
    return [
        GeneratedSample(data.X[i], float(data.y_true[i]), float(data.c[i]), float(data.time[i]), bool(data.event[i]))
        for i in range(n)
    ]


def _event_rate_mc(template: CoxModel, lam: float, X, uy, uc) -> float:
    m = template.with_lambda(lam)
    y = -np.log1p(-uy) / m.event_rate(X)
    c = -np.log1p(-uc) / m.censoring_rate(X)
    return float(np.mean(y <= c))


def calibrate_lambda(
    template: CoxModel,
    target_p: float,
    mc_n: int = 200_000,
    seed=0,
    tol: float = 0.005,
    max_iter: int = 60,
    bracket=LAMBDA_BRACKET,
) -> float:
    """Find ``lambda`` whose Monte-Carlo event rate is within ``tol`` of ``target_p``.

    Bisection over ``bracket`` with common random numbers, so the estimated
    rate is a monotone step function of ``lambda``.  A target above the
    rate at the lower edge returns that edge with a warning; a target below
    the rate at the upper edge raises :class:`CalibrationError`.
    """
    if not 0 < target_p < 1:
        raise ValidationError("target_p must lie in (0, 1)")
    rng = make_rng(seed)
    X = rng.random((mc_n, template.d))
    uy, uc = rng.random((2, mc_n))
    lo, hi = bracket
    p_lo = _event_rate_mc(template, lo, X, uy, uc)
    p_hi = _event_rate_mc(template, hi, X, uy, uc)
    if target_p > p_lo + tol:
        log.warning("target p=%.4f above the reachable %.4f; returning lambda=%g", target_p, p_lo, lo)
        return float(lo)
    if target_p < p_hi - tol:
        raise CalibrationError(f"target p={target_p} below the reachable {p_hi:.4f} at lambda={hi}")
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        p = _event_rate_mc(template, mid, X, uy, uc)
        if abs(p - target_p) <= tol:
            break
        if p > target_p:
            lo = mid
        else:
            hi = mid
    return float(mid)
