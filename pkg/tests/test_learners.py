import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from censored_erm.data import CensoredDataset, ValidationError
from censored_erm.learners import (
    LearnerSpec,
    NumericalError,
    _TreeBuilder,
    fit,
    load_model,
    model_from_json,
    model_to_json,
    predict,
)
from censored_erm.risk import WeightVector, weighted_risk

SEEDS = st.integers(0, 2**32 - 1)
PENALIZED = [LearnerSpec("ridge", ridge_lambda=0.7), LearnerSpec("kernel_ridge", ridge_lambda=0.3, rbf_gamma=2.0)]
CLOSED_FORM = [LearnerSpec("linear")] + PENALIZED


def _problem(seed, n=40, d=3):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    y = np.exp(X @ rng.standard_normal(d)) + 0.1 * rng.standard_normal(n) ** 2
    w = rng.random(n) * (rng.random(n) > 0.2)
    w[0] = 1.0
    return CensoredDataset(X, y, np.ones(n)), w


def test_exact_line():
    x = np.linspace(0, 1, 7)
    data = CensoredDataset(x, 2 * x + 1, np.ones(7))
    m = fit(data, np.random.default_rng(0).random(7) + 0.1, LearnerSpec("linear"))
    assert m.coef[0] == pytest.approx(2.0, abs=1e-9)
    assert m.intercept == pytest.approx(1.0, abs=1e-9)
    assert predict(m, [[3.0]])[0] == pytest.approx(7.0, abs=1e-9)


@given(SEEDS)
def test_constant_weights_match_normal_equations(seed):
    data, _ = _problem(seed)
    m = fit(data, np.full(data.n, 0.37), LearnerSpec("linear"))
    A = np.c_[data.X, np.ones(data.n)]
    beta = np.linalg.solve(A.T @ A, A.T @ data.time)
    np.testing.assert_allclose(np.r_[m.coef, m.intercept], beta, rtol=1e-9, atol=1e-9)


@given(SEEDS)
def test_duplicate_equals_double_weight(seed):
    data, w = _problem(seed)
    dup = CensoredDataset(np.r_[data.X, data.X[:1]], np.r_[data.time, data.time[:1]], np.ones(data.n + 1))
    a = fit(data, np.r_[2 * w[0], w[1:]], LearnerSpec("linear"))
    b = fit(dup, np.r_[w, w[0]], LearnerSpec("linear"))
    np.testing.assert_allclose(a.coef, b.coef, atol=1e-9)
    assert a.intercept == pytest.approx(b.intercept, abs=1e-9)


@pytest.mark.parametrize("spec", CLOSED_FORM, ids=lambda s: s.family)
@given(seed=SEEDS, c=st.floats(1e-3, 1e3))
def test_weight_scale_invariance(spec, seed, c):
    data, w = _problem(seed)
    Xq = np.random.default_rng(seed).random((10, data.d))
    a, b = fit(data, w, spec).predict(Xq), fit(data, c * w, spec).predict(Xq)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)


@pytest.mark.parametrize("spec", CLOSED_FORM + [LearnerSpec("tree_forest", n_trees=3)], ids=lambda s: s.family)
@given(seed=SEEDS)
def test_zero_weight_points_are_irrelevant(spec, seed):
    data, w = _problem(seed)
    rng = np.random.default_rng(seed + 1)
    zero = w == 0
    X2, y2 = data.X.copy(), data.time.copy()
    X2[zero] = rng.random((zero.sum(), data.d)) * 10
    y2[zero] = rng.exponential(size=zero.sum()) * 100
    other = CensoredDataset(X2, y2, np.ones(data.n))
    Xq = rng.random((10, data.d))
    np.testing.assert_allclose(fit(data, w, spec).predict(Xq), fit(other, w, spec).predict(Xq), rtol=0, atol=1e-9)


def test_ridge_shrinkage():
    data, w = _problem(7)
    norms = [np.linalg.norm(fit(data, w, LearnerSpec("ridge", ridge_lambda=lam)).coef) for lam in (0.01, 0.1, 1, 10, 100)]
    assert all(a >= b for a, b in zip(norms, norms[1:]))


@given(SEEDS)
def test_linear_fit_is_optimal(seed):
    data, w = _problem(seed)
    m = fit(data, w, LearnerSpec("linear"))
    wv = WeightVector(w, False, "ipcw")
    best = weighted_risk(data, m.predict(data.X), wv)
    rng = np.random.default_rng(seed)
    for _ in range(100):
        dc, di = rng.standard_normal(data.d) * 0.01, rng.standard_normal() * 0.01
        pert = data.X @ (m.coef + dc) + m.intercept + di
        assert best <= weighted_risk(data, pert, wv) + 1e-12


def test_single_stump_is_weighted_mean():
    data, w = _problem(3)
    m = fit(data, w, LearnerSpec("tree_forest", n_trees=1, max_depth=0))
    assert m.predict(data.X[:4]) == pytest.approx(np.full(4, w @ data.time / w.sum()), rel=1e-12)


def test_kernel_ridge_small_gamma_gives_weighted_mean():
    data, w = _problem(11, n=60)
    m = fit(data, w, LearnerSpec("kernel_ridge", ridge_lambda=1.0, rbf_gamma=1e-9))
    Xq = np.random.default_rng(0).random((20, data.d))
    assert np.max(np.abs(m.predict(Xq) - w @ data.time / w.sum())) < 1e-3


def test_forest_fits_a_step_and_is_reproducible():
    x = np.linspace(0, 1, 200)
    y = np.where(x > 0.5, 2.0, 0.0)
    data = CensoredDataset(x, y, np.ones(200))
    spec = LearnerSpec("tree_forest", n_trees=10, bootstrap_seed=3)
    m = fit(data, np.ones(200), spec)
    np.testing.assert_allclose(m.predict([[0.2], [0.8]]), [0.0, 2.0])
    np.testing.assert_array_equal(m.predict(data.X), fit(data, np.ones(200), spec).predict(data.X))


def test_tree_split_ties_prefer_lower_feature_and_threshold():
    # both features separate y perfectly; feature 0 must be chosen
    X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    b = _TreeBuilder(X, np.array([0.0, 0.0, 1.0, 1.0]), np.ones(4), 1, 0.0)
    b.build(np.arange(4))
    assert b.feature[0] == 0 and b.threshold[0] == 0.5
    # two equally good thresholds on one feature: the lower one wins
    x = np.array([[0.0], [1.0], [2.0]])
    b = _TreeBuilder(x, np.array([0.0, 1.0, 0.0]), np.ones(3), 1, 0.0)
    b.build(np.arange(3))
    assert b.threshold[0] == 0.5


def test_errors():
    data, w = _problem(0)
    with pytest.raises(ValidationError):
        fit(data, np.zeros(data.n))
    with pytest.raises(ValidationError):
        fit(data, -w)
    with pytest.raises(ValidationError):
        fit(data, w[:-1])
    X = np.c_[np.linspace(0, 1, 10), np.linspace(0, 1, 10)]
    with pytest.raises(NumericalError):
        fit(CensoredDataset(X, np.arange(10.0), np.ones(10)), np.ones(10), LearnerSpec("linear"))
    # the same rank-deficient design is fine with a penalty
    fit(CensoredDataset(X, np.arange(10.0), np.ones(10)), np.ones(10), LearnerSpec("ridge"))
    m = fit(data, w)
    with pytest.raises(ValidationError):
        m.predict(np.zeros((2, data.d + 1)))
    for bad in (dict(family="svr"), dict(ridge_lambda=-1), dict(rbf_gamma=0.0), dict(n_trees=0)):
        with pytest.raises(ValidationError):
            LearnerSpec(**bad)


@pytest.mark.parametrize(
    "spec",
    CLOSED_FORM + [LearnerSpec("tree_forest", n_trees=4, max_depth=3)],
    ids=lambda s: s.family,
)
def test_model_json_round_trip(spec, tmp_path):
    data, w = _problem(5)
    m = fit(data, w, spec)
    path = tmp_path / "m.json"
    path.write_text(json.dumps(model_to_json(m, spec, "ipcw_knn")))
    back = load_model(path)
    np.testing.assert_array_equal(back.predict(data.X), m.predict(data.X))
    doc = json.loads(path.read_text())
    assert doc["schema"] == "censored-erm/model" and doc["version"] == 1
    assert doc["learner"]["family"] == spec.family and doc["loss"] == "ipcw_knn"
    with pytest.raises(ValidationError):
        model_from_json(dict(doc, version=99))
