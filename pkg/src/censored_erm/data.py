"""Censored observations, step survival curves and the restriction domain.

Datasets are stored column-wise as numpy arrays: a feature matrix ``X`` of
shape ``(n, d)``, observed durations ``time`` (``min(Y, C)``) and event
indicators ``event`` (``True`` when the duration is uncensored).  Synthetic
datasets may additionally carry the true durations and censoring times.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised for malformed or out-of-range inputs."""


@dataclass(frozen=True)
class CensoredObservation:
    x: np.ndarray
    y_tilde: float
    delta: bool

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise ValidationError("covariates must be finite")
        if not np.isfinite(self.y_tilde) or self.y_tilde < 0:
            raise ValidationError(f"observed time must be finite and >= 0, got {self.y_tilde}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y_tilde", float(self.y_tilde))
        object.__setattr__(self, "delta", bool(self.delta))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


class CensoredDataset:
    """An immutable sample of right-censored triplets ``(X, min(Y, C), delta)``.

    Parameters
    ----------
    X : array_like of shape (n, d)
        Covariates.  A 1-D array is read as ``d = 1``.
    time : array_like of shape (n,)
        Observed durations, finite and nonnegative.
    event : array_like of shape (n,)
        Event indicators; nonzero means uncensored.
    y_true, c : array_like of shape (n,), optional
        True durations and censoring times, only known for simulated data.
        Required by the oracle loss.
    """

    def __init__(self, X, time, event, y_true=None, c=None):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValidationError("X must be a 2-D array")
        time = np.asarray(time, dtype=float).reshape(-1)
        event = np.asarray(event).reshape(-1)
        n = X.shape[0]
        if time.shape[0] != n or event.shape[0] != n:
            raise ValidationError("X, time and event must have the same length")
        if not np.all(np.isfinite(X)):
            raise ValidationError("X contains NaN or infinite values")
        if not np.all(np.isfinite(time)):
            raise ValidationError("time contains NaN or infinite values")
        if np.any(time < 0):
            raise ValidationError("observed times must be nonnegative")
        if event.dtype != bool:
            ev = np.asarray(event, dtype=float)
            if not np.all(np.isin(ev, (0.0, 1.0))):
                raise ValidationError("event indicators must be 0 or 1")
            event = ev.astype(bool)
        self.X = _readonly(X)
        self.time = _readonly(time)
        self.event = _readonly(event)
        self.y_true = None if y_true is None else _readonly(np.asarray(y_true, dtype=float).reshape(-1))
        self.c = None if c is None else _readonly(np.asarray(c, dtype=float).reshape(-1))
        for extra in (self.y_true, self.c):
            if extra is not None and extra.shape[0] != n:
                raise ValidationError("truth columns must match the sample size")

    @classmethod
    def from_observations(cls, observations: Sequence[CensoredObservation]) -> "CensoredDataset":
        if len(observations) == 0:
            return cls(np.empty((0, 1)), [], [])
        dims = {o.x.shape[0] for o in observations}
        if len(dims) != 1:
            raise ValidationError("all observations must share the same dimension")
        X = np.vstack([o.x for o in observations])
        return cls(X, [o.y_tilde for o in observations], [o.delta for o in observations])

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def has_truth(self) -> bool:
        return self.y_true is not None

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[CensoredObservation]:
        for i in range(self.n):
            yield CensoredObservation(self.X[i], self.time[i], self.event[i])

    def __repr__(self) -> str:
        return f"CensoredDataset(n={self.n}, d={self.d}, events={int(self.event.sum())})"

    def subset(self, idx) -> "CensoredDataset":
        idx = np.asarray(idx)
        return CensoredDataset(
            self.X[idx],
            self.time[idx],
            self.event[idx],
            None if self.y_true is None else self.y_true[idx],
            None if self.c is None else self.c[idx],
        )

    def drop(self, i: int) -> "CensoredDataset":
        """Return the sample with observation ``i`` removed."""
        keep = np.ones(self.n, dtype=bool)
        keep[i] = False
        return self.subset(keep)

    def require_nonempty(self):
        if self.n == 0:
            raise ValidationError("dataset is empty")


def read_csv(path, with_truth: Optional[bool] = None) -> CensoredDataset:
    """Read a dataset with header ``x1,...,xd,time,event[,y_true,c]``.

    Truth columns are picked up automatically when present, unless
    ``with_truth`` is ``False``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    if "time" not in header or "event" not in header:
        raise ValidationError(f"{path}: header must contain 'time' and 'event' columns")
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    if not xcols:
        raise ValidationError(f"{path}: no covariate columns (x1, ..., xd)")
    try:
        table = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if table.size == 0:
        table = table.reshape(0, len(header))
    if table.shape[1] != len(header):
        raise ValidationError(f"{path}: ragged rows")
    col = {h: i for i, h in enumerate(header)}
    truth = with_truth is not False and "y_true" in col and "c" in col
    return CensoredDataset(
        table[:, xcols],
        table[:, col["time"]],
        table[:, col["event"]],
        table[:, col["y_true"]] if truth else None,
        table[:, col["c"]] if truth else None,
    )


def write_csv(data: CensoredDataset, path, with_truth: bool = False) -> None:
    if with_truth and not data.has_truth:
        raise ValidationError("dataset carries no truth columns")
    header = [f"x{j + 1}" for j in range(data.d)] + ["time", "event"]
    if with_truth:
        header += ["y_true", "c"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(data.n):
            # repr() round-trips doubles exactly
            row = [repr(float(v)) for v in data.X[i]]
            row += [repr(float(data.time[i])), "1" if data.event[i] else "0"]
            if with_truth:
                row += [repr(float(data.y_true[i])), repr(float(data.c[i]))]
            w.writerow(row)


class StepSurvivalFunction:
    """Right-continuous, nonincreasing step function equal to 1 before its first jump.

    ``values[k]`` is the value on ``[jump_times[k], jump_times[k + 1])``.
    """

    def __init__(self, jump_times: Iterable[float] = (), values: Iterable[float] = ()):
        t = np.asarray(list(jump_times), dtype=float)
        v = np.asarray(list(values), dtype=float)
        if t.shape != v.shape:
            raise ValidationError("jump_times and values must have the same length")
        if t.size:
            if np.any(t < 0) or np.any(np.diff(t) <= 0):
                raise ValidationError("jump times must be nonnegative and strictly increasing")
            if np.any(v < 0) or np.any(v > 1) or np.any(np.diff(v) > 0):
                raise ValidationError("values must lie in [0, 1] and be nonincreasing")
        self.jump_times = _readonly(t)
        self.values = _readonly(v)

    def __repr__(self):
        return f"StepSurvivalFunction({len(self.jump_times)} jumps)"

    def _lookup(self, t, side):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.jump_times, t, side=side)
        padded = np.concatenate(([1.0], self.values))
        out = padded[k]
        return float(out) if out.ndim == 0 else out

    def evaluate(self, t):
        """S(t): value of the rightmost jump at or before ``t``."""
        return self._lookup(t, "right")

    def left_limit(self, t):
        """S(t-): value of the rightmost jump strictly before ``t``."""
        return self._lookup(t, "left")

    __call__ = evaluate


def evaluate(s: StepSurvivalFunction, t):
    return s.evaluate(t)


def left_limit(s: StepSurvivalFunction, t):
    return s.left_limit(t)


@dataclass(frozen=True)
class RestrictionDomain:
    """A computable stand-in for the region where survival functions stay away from 0.

    ``(y, x)`` belongs to the domain when ``y <= tau`` and ``x`` lies in the
    closed box ``[low, high]`` (no box means every ``x``).
    """

    tau: float = np.inf
    low: Optional[np.ndarray] = field(default=None)
    high: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValidationError("tau must be nonnegative")
        if (self.low is None) != (self.high is None):
            raise ValidationError("feature box needs both low and high corners")
        if self.low is not None:
            lo = np.asarray(self.low, dtype=float).reshape(-1)
            hi = np.asarray(self.high, dtype=float).reshape(-1)
            if lo.shape != hi.shape or np.any(lo > hi):
                raise ValidationError("invalid feature box")
            object.__setattr__(self, "low", lo)
            object.__setattr__(self, "high", hi)

    @classmethod
    def from_quantile(cls, data: CensoredDataset, q: float = 0.9, low=None, high=None):
        """Cap times at the empirical ``q``-quantile of the observed durations."""
        data.require_nonempty()
        if not 0 < q <= 1:
            raise ValidationError("quantile level must be in (0, 1]")
        return cls(float(np.quantile(data.time, q)), low, high)

    def contains(self, y, X) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        inside = y <= self.tau
        if self.low is not None:
            X = np.atleast_2d(np.asarray(X, dtype=float))
            inside = inside & np.all((X >= self.low) & (X <= self.high), axis=1)
        return inside
