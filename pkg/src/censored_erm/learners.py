"""Weighted least-squares learners.

Every learner minimizes ``sum_i w_i (y_i - f(x_i))^2`` (plus a penalty for
the ridge families).  Penalized objectives use the weights rescaled to sum
to ``n`` so that multiplying all weights by a constant leaves the fit
unchanged; with weights ``delta_i / S_C`` this matches the usual
``sample_weight`` convention of penalized regressors.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .data import CensoredDataset, ValidationError
from .risk import WeightVector

FAMILIES = ("linear", "ridge", "kernel_ridge", "tree_forest")
MODEL_SCHEMA = "censored-erm/model"
MODEL_VERSION = 1


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class LearnerSpec:
    family: str = "linear"
    ridge_lambda: float = 1.0
    rbf_gamma: Optional[float] = None  # None: 1 / d
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_leaf_weight: float = 1e-6
    bootstrap_seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown learner {self.family!r}; choose from {FAMILIES}")
        if self.ridge_lambda < 0:
            raise ValidationError("ridge_lambda must be nonnegative")
        if self.rbf_gamma is not None and not self.rbf_gamma > 0:
            raise ValidationError("rbf_gamma must be positive")
        if self.n_trees < 1:
            raise ValidationError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValidationError("max_depth must be >= 0")
        if self.min_leaf_weight < 0:
            raise ValidationError("min_leaf_weight must be nonnegative")

    @property
    def label(self) -> str:
        return self.family


class FittedModel:
    family = ""

    def __init__(self, d: int):
        self.d = d

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1) if (self.d > 1 or X.shape[0] == 1) else X.reshape(-1, 1)
        if X.shape[1] != self.d:
            raise ValidationError(f"model expects dimension {self.d}, got {X.shape[1]}")
        return X

    def predict(self, X) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)


class LinearModel(FittedModel):
    def __init__(self, family, coef, intercept):
        coef = np.asarray(coef, dtype=float)
        super().__init__(coef.shape[0])
        self.family = family
        self.coef = coef
        self.intercept = float(intercept)

    def __repr__(self):
        return f"LinearModel({self.family}, coef={np.round(self.coef, 4).tolist()}, intercept={self.intercept:.4g})"

    def predict(self, X):
        return self._check(X) @ self.coef + self.intercept

    def to_dict(self):
        return {"family": self.family, "d": self.d, "coef": self.coef.tolist(), "intercept": self.intercept}


class KernelRidgeModel(FittedModel):
    family = "kernel_ridge"

    def __init__(self, X_train, dual_coef, intercept, gamma):
        X_train = np.asarray(X_train, dtype=float)
        super().__init__(X_train.shape[1])
        self.X_train = X_train
        self.dual_coef = np.asarray(dual_coef, dtype=float)
        self.intercept = float(intercept)
        self.gamma = float(gamma)

    def predict(self, X):
        X = self._check(X)
        return _rbf(X, self.X_train, self.gamma) @ self.dual_coef + self.intercept

    def to_dict(self):
        return {
            "family": self.family,
            "d": self.d,
            "gamma": self.gamma,
            "intercept": self.intercept,
            "X_train": self.X_train.tolist(),
            "dual_coef": self.dual_coef.tolist(),
        }


def _rbf(A, B, gamma):
    sq = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def _weighted_center(X, y, w):
    sw = w.sum()
    xm = w @ X / sw
    ym = w @ y / sw
    return X - xm, y - ym, xm, ym


def fit_linear(X, y, w, ridge_lambda=0.0, family="linear") -> LinearModel:
    """Weighted least squares with an unpenalized intercept."""
    n = len(w)
    pos = w > 0
    X, y, w = X[pos], y[pos], w[pos]
    w = w * (n / w.sum()) if ridge_lambda > 0 else w / w.max()
    Xc, yc, xm, ym = _weighted_center(X, y, w)
    sw = np.sqrt(w)
    if ridge_lambda > 0:
        A = Xc.T @ (w[:, None] * Xc) + ridge_lambda * np.eye(X.shape[1])
        coef = np.linalg.solve(A, Xc.T @ (w * yc))
    else:
        coef, _, rank, _ = np.linalg.lstsq(sw[:, None] * Xc, sw * yc, rcond=None)
        if rank < X.shape[1]:
            raise NumericalError(
                f"weighted design matrix has rank {rank} < {X.shape[1]}; use ridge_lambda > 0"
            )
    return LinearModel(family, coef, ym - xm @ coef)


def fit_kernel_ridge(X, y, w, ridge_lambda=1.0, gamma=None) -> KernelRidgeModel:
    """Weighted RBF kernel ridge with an unpenalized intercept.

    Solves ``(K + lambda W^-1) a + b 1 = y, 1'a = 0`` on the positively
    weighted points, the stationarity conditions of
    ``sum_i w_i (y_i - b - (K a)_i)^2 + lambda a'K a``.
    """
    if ridge_lambda <= 0:
        raise ValidationError("kernel ridge needs ridge_lambda > 0")
    gamma = 1.0 / X.shape[1] if gamma is None else gamma
    n = len(w)
    pos = w > 0
    w = w[pos] * (n / w.sum())
    X, y = X[pos], y[pos]
    m = X.shape[0]
    A = np.empty((m + 1, m + 1))
    A[:m, :m] = _rbf(X, X, gamma)
    A[np.arange(m), np.arange(m)] += ridge_lambda / w
    A[:m, m] = 1.0
    A[m, :m] = 1.0
    A[m, m] = 0.0
    sol = np.linalg.solve(A, np.r_[y, 0.0])
    return KernelRidgeModel(X, sol[:m], sol[m], gamma)


# -- trees ---------------------------------------------------------------

class _TreeBuilder:
    def __init__(self, X, y, w, max_depth, min_leaf_weight):
        self.X, self.y, self.w = X, y, w
        self.max_depth = np.inf if max_depth is None else max_depth
        self.min_leaf_weight = min_leaf_weight
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []

    def _node(self, value):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.value) - 1

    def _best_split(self, idx):
        """Largest weighted-SSE reduction; ties go to the lower feature, then lower threshold."""
        y, w = self.y[idx], self.w[idx]
        W = w.sum()
        ty, tyy = w @ y, (w * y) @ y
        parent = tyy - ty**2 / W
        best = (0.0, -1, 0.0)
        if not parent > 0:
            return best
        scale = parent
        Xn = self.X[idx]
        order = np.argsort(Xn, axis=0, kind="stable")
        xs = np.take_along_axis(Xn, order, axis=0)
        ws, wys = w[order], (w * y)[order]
        cw = np.cumsum(ws, axis=0)[:-1]
        cwy = np.cumsum(wys, axis=0)[:-1]
        cwyy = np.cumsum(wys * y[order], axis=0)[:-1]
        rw = W - cw
        valid = (xs[1:] > xs[:-1]) & (cw >= self.min_leaf_weight) & (rw >= self.min_leaf_weight)
        valid &= (cw > 0) & (rw > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            sse = (cwyy - cwy**2 / cw) + ((tyy - cwyy) - (ty - cwy) ** 2 / rw)
        gain = np.where(valid, parent - sse, -np.inf)
        ks = np.argmax(gain, axis=0)  # first maximum: lowest threshold
        for j, k in enumerate(ks):
            # gains within rounding of each other count as ties
            if valid[k, j] and gain[k, j] > best[0] + 1e-12 * scale:
                best = (gain[k, j], j, 0.5 * (xs[k, j] + xs[k + 1, j]))
        return best

    def build(self, idx, depth=0):
        y, w = self.y[idx], self.w[idx]
        node = self._node(float(w @ y / w.sum()))
        if depth >= self.max_depth or idx.size < 2:
            return node
        gain, j, thr = self._best_split(idx)
        if j < 0 or gain <= 0:
            return node
        go_left = self.X[idx, j] <= thr
        self.feature[node] = j
        self.threshold[node] = thr
        self.left[node] = self.build(idx[go_left], depth + 1)
        self.right[node] = self.build(idx[~go_left], depth + 1)
        return node

    def arrays(self):
        return {
            "feature": np.array(self.feature, dtype=int),
            "threshold": np.array(self.threshold, dtype=float),
            "left": np.array(self.left, dtype=int),
            "right": np.array(self.right, dtype=int),
            "value": np.array(self.value, dtype=float),
        }


def _tree_predict(tree, X):
    node = np.zeros(X.shape[0], dtype=int)
    while True:
        f = tree["feature"][node]
        internal = f >= 0
        if not internal.any():
            return tree["value"][node]
        rows = np.flatnonzero(internal)
        nd = node[rows]
        go_left = X[rows, tree["feature"][nd]] <= tree["threshold"][nd]
        node[rows] = np.where(go_left, tree["left"][nd], tree["right"][nd])


class ForestModel(FittedModel):
    family = "tree_forest"

    def __init__(self, d, trees):
        super().__init__(d)
        self.trees = trees

    def __repr__(self):
        return f"ForestModel({len(self.trees)} trees)"

    def predict(self, X):
        X = self._check(X)
        return np.mean([_tree_predict(t, X) for t in self.trees], axis=0)

    def to_dict(self):
        return {
            "family": self.family,
            "d": self.d,
            "trees": [{k: v.tolist() for k, v in t.items()} for t in self.trees],
        }


def fit_forest(X, y, w, spec: LearnerSpec) -> ForestModel:
    """Bagged weighted CART.

    Each tree is grown on a bootstrap sample drawn with probabilities
    proportional to the weights, from its own seed stream, so the forest does
    not depend on the order in which trees are built.  A single tree with
    ``max_depth=0`` is the weighted mean.
    """
    n = len(w)
    p = w / w.sum()
    seeds = np.random.SeedSequence(spec.bootstrap_seed).spawn(spec.n_trees)
    trees = []
    for ss in seeds:
        rng = np.random.Generator(np.random.PCG64(ss))
        if spec.n_trees == 1 and spec.max_depth == 0:
            idx, tw = np.arange(n), w
        else:
            # duplicates can never be separated, so grow on the distinct
            # draws weighted by their multiplicity
            counts = np.bincount(rng.choice(n, size=n, replace=True, p=p), minlength=n)
            idx = np.flatnonzero(counts)
            tw = counts[idx].astype(float)
        b = _TreeBuilder(X[idx], y[idx], tw, spec.max_depth, spec.min_leaf_weight)
        b.build(np.arange(len(idx))[tw > 0])
        trees.append(b.arrays())
    return ForestModel(X.shape[1], trees)


# -- entry points ----------------------------------------------------------

def fit(data: CensoredDataset, w, spec: LearnerSpec = LearnerSpec()) -> FittedModel:
    """Minimize the weighted squared error of ``spec.family`` on ``data``.

    ``w`` is a :class:`WeightVector` or an array.  For the ``oracle`` loss
    the true durations are the regression targets.
    """
    weights = np.asarray(w.weights if isinstance(w, WeightVector) else w, dtype=float)
    if weights.shape[0] != data.n:
        raise ValidationError("weights and data must have the same length")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValidationError("weights must be finite and nonnegative")
    if not np.any(weights > 0):
        raise ValidationError("all weights are zero; nothing to fit")
    y = data.time
    if isinstance(w, WeightVector) and w.source_variant == "oracle":
        if not data.has_truth:
            raise ValidationError("the oracle loss needs true durations")
        y = data.y_true
    X, y = np.asarray(data.X), np.asarray(y)
    if spec.family == "linear":
        return fit_linear(X, y, weights)
    if spec.family == "ridge":
        return fit_linear(X, y, weights, spec.ridge_lambda, family="ridge")
    if spec.family == "kernel_ridge":
        return fit_kernel_ridge(X, y, weights, spec.ridge_lambda, spec.rbf_gamma)
    return fit_forest(X, y, weights, spec)


def predict(model: FittedModel, X) -> np.ndarray:
    return model.predict(X)


def model_to_json(model: FittedModel, spec: Optional[LearnerSpec] = None, loss: Optional[str] = None) -> dict:
    doc = {"schema": MODEL_SCHEMA, "version": MODEL_VERSION, "model": model.to_dict()}
    if spec is not None:
        doc["learner"] = asdict(spec)
    if loss is not None:
        doc["loss"] = loss
    return doc


def model_from_json(doc: dict) -> FittedModel:
    if doc.get("schema") != MODEL_SCHEMA:
        raise ValidationError("not a censored-erm model file")
    if doc.get("version") != MODEL_VERSION:
        raise ValidationError(f"unsupported model version {doc.get('version')}")
    m = doc["model"]
    fam = m["family"]
    if fam in ("linear", "ridge"):
        return LinearModel(fam, m["coef"], m["intercept"])
    if fam == "kernel_ridge":
        return KernelRidgeModel(np.array(m["X_train"]).reshape(-1, m["d"]), m["dual_coef"], m["intercept"], m["gamma"])
    if fam == "tree_forest":
        trees = [
            {
                "feature": np.array(t["feature"], dtype=int),
                "threshold": np.array(t["threshold"], dtype=float),
                "left": np.array(t["left"], dtype=int),
                "right": np.array(t["right"], dtype=int),
                "value": np.array(t["value"], dtype=float),
            }
            for t in m["trees"]
        ]
        return ForestModel(m["d"], trees)
    raise ValidationError(f"unknown model family {fam!r}")


def load_model(path) -> FittedModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_json(json.load(fh))
