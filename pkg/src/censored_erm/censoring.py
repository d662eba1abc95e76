"""Estimators of the conditional survival function of the censoring time.

All nonparametric variants share one weighted product-limit routine.  For a
query point ``x`` every training observation ``j`` receives a weight
``w_j(x)`` (kernel mass, k-NN membership, or 1 for the pooled estimator) and

    S_C(t | x) = prod_{censored times s <= t} (1 - D_s(x) / R_s(x)),

where ``D_s`` is the weight of observations censored at ``s`` and ``R_s``
the weight of the risk set ``{time >= s}``.  This is the discrete form of the
conditional Nelson-Aalen / Kaplan-Meier pair built from kernel
subsurvival estimates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .data import CensoredDataset, StepSurvivalFunction, ValidationError
from .kernels import KernelSpec, default_bandwidth, kernel_matrix

VARIANTS = ("kernel_beran", "kernel_beran_loo", "knn", "unconditional_km", "oracle")

# rows of the weight matrix processed at once; bounds memory at ~CHUNK * n doubles
_CHUNK = 256


@dataclass(frozen=True)
class ConditionalSubsurvivalEstimate:
    """Kernel estimates of the joint subsurvival functions and the covariate density.

    ``h0_hat(u, x)`` estimates ``P(time > u, censored, X in dx)``,
    ``h_hat(u, x)`` estimates ``P(time > u, X in dx)`` and ``g_hat(x)`` the
    density of ``X``; all three are unnormalized by ``g``.
    """

    data: CensoredDataset
    kernel: KernelSpec
    bandwidth: float

    def _k(self, x):
        x = np.asarray(x, dtype=float).reshape(1, -1)
        if x.shape[1] != self.data.d:
            raise ValidationError(f"expected a point of dimension {self.data.d}")
        return kernel_matrix(self.kernel, x, self.data.X, self.bandwidth)[0]

    # masked terms become zeros rather than being dropped, so every sum runs
    # over the same n terms in the same order and h0 <= h, monotonicity in u
    # hold exactly in floating point
    def h0_hat(self, u: float, x) -> float:
        mask = (self.data.time > u) & ~self.data.event
        return float(np.sum(np.where(mask, self._k(x), 0.0)) / self.data.n)

    def h_hat(self, u: float, x) -> float:
        mask = self.data.time > u
        return float(np.sum(np.where(mask, self._k(x), 0.0)) / self.data.n)

    def g_hat(self, x) -> float:
        return float(np.sum(self._k(x)) / self.data.n)


def fit_conditional_subsurvival(data: CensoredDataset, spec: Optional[KernelSpec] = None, h: float = 1.0):
    data.require_nonempty()
    if not h > 0:
        raise ValidationError(f"bandwidth must be positive, got {h}")
    return ConditionalSubsurvivalEstimate(data, spec or KernelSpec(), float(h))


class _Timeline:
    """Training times sorted once, grouped into distinct values."""

    def __init__(self, time: np.ndarray, event: np.ndarray):
        # at equal times uncensored observations come first
        self.order = np.lexsort((event.astype(int) * -1, time))
        ts = time[self.order]
        self.censored = ~event[self.order]
        starts = np.flatnonzero(np.r_[True, ts[1:] != ts[:-1]])
        self.starts = starts
        self.unique = ts[starts]

    def factors(self, W: np.ndarray, drop_last_jump: bool) -> np.ndarray:
        """Per-group product-limit factors, shape ``(rows, distinct times)``."""
        Ws = W[:, self.order]
        cens = np.add.reduceat(np.where(self.censored, Ws, 0.0), self.starts, axis=1)
        unc = np.add.reduceat(np.where(self.censored, 0.0, Ws), self.starts, axis=1)
        total = cens + unc
        at_risk = np.cumsum(total[:, ::-1], axis=1)[:, ::-1]
        later = np.zeros_like(at_risk)
        later[:, :-1] = at_risk[:, 1:]
        # mass that survives the censorings at this time; no subtraction so an
        # exhausted risk set gives an exact zero
        remaining = unc + later
        jump = cens > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            f = np.where(jump, remaining / (remaining + cens), 1.0)
        if drop_last_jump:
            has = jump.any(axis=1)
            last = jump.shape[1] - 1 - np.argmax(jump[:, ::-1], axis=1)
            rows = np.flatnonzero(has)
            f[rows, last[rows]] = 1.0
        return f

    def lookup(self, cumf: np.ndarray, t: np.ndarray, left_limit: bool) -> np.ndarray:
        k = np.searchsorted(self.unique, t, side="left" if left_limit else "right")
        padded = np.concatenate([np.ones((cumf.shape[0], 1)), cumf], axis=1)
        return padded[np.arange(cumf.shape[0]), k]


class CensoringEstimator:
    """A fitted estimate of ``S_C(t | x)``.

    Use :func:`fit_censoring_estimator` to build one.  Query methods accept an
    optional ``diagnostics`` dict which is incremented in place; the
    estimator itself never changes after fitting.

    Attributes
    ----------
    variant : str
    data : CensoredDataset
    drop_last_jump : bool
        Omit the final censoring jump of each conditional curve, i.e. the
        one at the largest censored time carrying positive weight at ``x``.
        This keeps the curve strictly positive.
    """

    def __init__(self, variant, data, drop_last_jump=False, kernel=None, bandwidth=None,
                 n_neighbors=None, survival=None):
        self.variant = variant
        self.data = data
        self.drop_last_jump = bool(drop_last_jump)
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.n_neighbors = n_neighbors
        self._survival = survival
        self._timeline = _Timeline(data.time, data.event) if data.n else None

    def __repr__(self):
        extra = ""
        if self.bandwidth is not None:
            extra = f", h={self.bandwidth:.4g}"
        elif self.n_neighbors is not None:
            extra = f", K={self.n_neighbors}"
        return f"CensoringEstimator({self.variant}{extra}, n={self.data.n})"

    @property
    def is_oracle(self) -> bool:
        return self.variant == "oracle"

    # -- weights --------------------------------------------------------
    def _weights(self, Xq: np.ndarray, exclude: Optional[np.ndarray]) -> np.ndarray:
        """Weight matrix of shape ``(len(Xq), n)``; ``exclude[r]`` drops training row r's self-weight."""
        X = self.data.X
        q, n = Xq.shape[0], X.shape[0]
        if self.variant == "unconditional_km":
            W = np.ones((q, n))
        elif self.variant in ("kernel_beran", "kernel_beran_loo"):
            W = kernel_matrix(self.kernel, Xq, X, self.bandwidth)
        else:
            dist = np.sum((Xq[:, None, :] - X[None, :, :]) ** 2, axis=-1)
            if exclude is not None:
                dist[np.arange(q), exclude] = np.inf
            # stable sort breaks distance ties by original index
            nn = np.argsort(dist, axis=1, kind="stable")[:, : self.n_neighbors]
            W = np.zeros((q, n))
            np.put_along_axis(W, nn, 1.0, axis=1)
        if exclude is not None:
            W[np.arange(q), exclude] = 0.0
        return W

    def _evaluate(self, t, Xq, left_limit, exclude=None, diagnostics=None):
        out = np.empty(len(t))
        tl = self._timeline
        for lo in range(0, len(t), _CHUNK):
            sl = slice(lo, lo + _CHUNK)
            ex = None if exclude is None else exclude[sl]
            W = self._weights(Xq[sl], ex)
            empty = ~(W.sum(axis=1) > 0)
            if empty.any():
                # no kernel mass at x: fall back to the pooled estimator
                W[empty] = 1.0
                if ex is not None:
                    W[np.flatnonzero(empty), ex[empty]] = 0.0
                if diagnostics is not None:
                    diagnostics["out_of_support"] = diagnostics.get("out_of_support", 0) + int(empty.sum())
            f = tl.factors(W, self.drop_last_jump)
            out[sl] = tl.lookup(np.cumprod(f, axis=1), t[sl], left_limit)
        return out

    def _check_query(self, t, X):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1) if X.shape[0] == self.data.d else X.reshape(-1, 1)
        if X.shape[1] != self.data.d:
            raise ValidationError(f"query dimension {X.shape[1]} != training dimension {self.data.d}")
        if X.shape[0] == 1 and t.shape[0] > 1:
            X = np.repeat(X, t.shape[0], axis=0)
        if t.shape[0] == 1 and X.shape[0] > 1:
            t = np.repeat(t, X.shape[0])
        if t.shape[0] != X.shape[0]:
            raise ValidationError("times and query points have different lengths")
        return t, X

    # -- public queries -------------------------------------------------
    def survival(self, t, X, left_limit: bool = False, diagnostics: Optional[dict] = None) -> np.ndarray:
        """Evaluate ``S_C(t_r | x_r)`` (or its left limit) for paired queries.

        A single time or a single point is broadcast against the other.
        """
        t, X = self._check_query(t, X)
        if self.is_oracle:
            return np.clip(np.asarray(self._survival(t, X), dtype=float), 0.0, 1.0)
        return self._evaluate(t, X, left_limit, diagnostics=diagnostics)

    def query(self, t: float, x, left_limit: bool = False) -> float:
        return float(self.survival([t], np.reshape(x, (1, -1)), left_limit)[0])

    def at_training_points(self, leave_one_out: Optional[bool] = None, left_limit: bool = True,
                           diagnostics: Optional[dict] = None) -> np.ndarray:
        """``S_C(time_i- | X_i)`` for every training observation.

        With ``leave_one_out`` the i-th value is computed as if observation i
        had been removed from the sample.  Defaults to leave-one-out for the
        ``kernel_beran_loo`` and ``knn`` variants.
        """
        d = self.data
        if leave_one_out is None:
            leave_one_out = self.variant in ("kernel_beran_loo", "knn")
        if self.is_oracle:
            return self.survival(d.time, d.X, left_limit)
        if leave_one_out and d.n < 2:
            raise ValidationError("leave-one-out needs at least two observations")
        if leave_one_out and self.variant == "knn" and self.n_neighbors > d.n - 1:
            raise ValidationError("leave-one-out k-NN needs n_neighbors <= n - 1")
        exclude = np.arange(d.n) if leave_one_out else None
        return self._evaluate(d.time, d.X, left_limit, exclude, diagnostics)

    def step_function(self, x) -> StepSurvivalFunction:
        """The conditional curve at ``x`` as an explicit step function."""
        if self.is_oracle:
            raise ValidationError("the oracle survival function is continuous")
        x = np.asarray(x, dtype=float).reshape(1, -1)
        if x.shape[1] != self.data.d:
            raise ValidationError("dimension mismatch")
        W = self._weights(x, None)
        if not W.sum() > 0:
            W[:] = 1.0
        f = self._timeline.factors(W, self.drop_last_jump)[0]
        jumps = f < 1.0
        return StepSurvivalFunction(self._timeline.unique[jumps], np.cumprod(f)[jumps])


def fit_censoring_estimator(
    data: CensoredDataset,
    variant: str = "kernel_beran",
    *,
    kernel: Optional[KernelSpec] = None,
    bandwidth="auto",
    n_neighbors: int = 5,
    drop_last_jump: bool = False,
    survival: Optional[Callable] = None,
) -> CensoringEstimator:
    """Fit an estimator of the censoring survival function.

    Parameters
    ----------
    data : CensoredDataset
    variant : {'kernel_beran', 'kernel_beran_loo', 'knn', 'unconditional_km', 'oracle'}
    kernel : KernelSpec, optional
        Defaults to the Epanechnikov product kernel.
    bandwidth : float or 'auto'
        ``'auto'`` applies :func:`default_bandwidth`.
    n_neighbors : int
        ``K`` for the k-NN variant.
    drop_last_jump : bool
    survival : callable, optional
        ``survival(t, X) -> S_C(t | X)`` for the oracle variant.
    """
    if variant not in VARIANTS:
        raise ValidationError(f"unknown censoring estimator {variant!r}; choose from {VARIANTS}")
    if variant == "oracle":
        if survival is None:
            raise ValidationError("the oracle estimator needs the true censoring survival function")
        return CensoringEstimator(variant, data, survival=survival)
    data.require_nonempty()
    if variant in ("kernel_beran", "kernel_beran_loo"):
        h = default_bandwidth(data) if bandwidth in (None, "auto") else float(bandwidth)
        if not h > 0:
            raise ValidationError(f"bandwidth must be positive, got {h}")
        return CensoringEstimator(variant, data, drop_last_jump, kernel=kernel or KernelSpec(), bandwidth=h)
    if variant == "knn":
        k = int(n_neighbors)
        if not 1 <= k <= data.n:
            raise ValidationError(f"n_neighbors must be in [1, {data.n}], got {n_neighbors}")
        return CensoringEstimator(variant, data, drop_last_jump, n_neighbors=k)
    return CensoringEstimator(variant, data, drop_last_jump)


def fit_loo_censoring_estimators(data: CensoredDataset, variant: str = "kernel_beran", **params) -> np.ndarray:
    """Leave-one-out values ``S_C^{(i)}(time_i- | X_i)`` for every i."""
    if data.n < 2:
        raise ValidationError("leave-one-out needs at least two observations")
    est = fit_censoring_estimator(data, variant, **params)
    return est.at_training_points(leave_one_out=True, left_limit=True)
