import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from censored_erm.data import CensoredDataset, ValidationError
from censored_erm.metrics import (
    UndefinedMetric,
    concordance_counts,
    concordance_index,
    evaluate_model,
    l2_test_error,
    risk_estimation_error,
)
from censored_erm.synthetic import CoxModel, calibrate_lambda, generate_dataset

SEEDS = st.integers(0, 2**32 - 1)


class Fixed:
    """A model returning stored predictions."""

    def __init__(self, pred):
        self.pred = np.asarray(pred, dtype=float)

    def predict(self, X):
        return self.pred


def _test_set(seed, n=30, ties=False):
    rng = np.random.default_rng(seed)
    t = rng.integers(1, 8, size=n).astype(float) if ties else rng.exponential(size=n)
    return CensoredDataset(rng.random((n, 2)), t, rng.random(n) < 0.6)


def _pairs_oracle(pred, time, event):
    conc = ties = comp = 0
    for i, j in itertools.permutations(range(len(time)), 2):
        if event[i] and time[j] > time[i]:
            comp += 1
            conc += pred[i] < pred[j]
            ties += pred[i] == pred[j]
    return conc, ties, comp


def test_l2_examples():
    y = np.array([1.0, 2.0, 4.0])
    assert l2_test_error(Fixed(y), None, y) == 0.0
    assert l2_test_error(Fixed([1.0]), None, [3.0]) == 4.0
    assert l2_test_error(Fixed(np.full(3, y.mean())), None, y) == pytest.approx(np.var(y), rel=1e-12)
    with pytest.raises(ValidationError):
        l2_test_error(Fixed([]), None, [])


@given(SEEDS, st.floats(-1e3, 1e3))
def test_l2_is_translation_consistent(seed, shift):
    rng = np.random.default_rng(seed)
    y, f = rng.random(20), rng.random(20)
    a = l2_test_error(Fixed(f), None, y)
    b = l2_test_error(Fixed(f + shift), None, y + shift)
    assert abs(a - b) <= 1e-12 * max(1.0, shift**2)


def test_concordance_examples():
    data = _test_set(0)
    assert concordance_index(Fixed(data.time), data) == 1.0
    assert concordance_index(Fixed(-data.time), data) == 0.0
    assert concordance_index(Fixed(np.ones(data.n)), data) == 0.5
    with pytest.raises(UndefinedMetric):
        concordance_index(Fixed([1.0, 2.0]), CensoredDataset([[0.0], [1.0]], [1.0, 2.0], [0, 0]))


@given(SEEDS, st.booleans())
def test_concordance_matches_pair_enumeration(seed, ties):
    data = _test_set(seed, ties=ties)
    pred = np.round(np.random.default_rng(seed).random(data.n), 1)
    assert concordance_counts(pred, data.time, data.event) == _pairs_oracle(pred, data.time, data.event)


@given(SEEDS)
def test_concordance_invariant_under_increasing_transform(seed):
    data = _test_set(seed)
    pred = np.random.default_rng(seed).standard_normal(data.n)
    assert concordance_index(Fixed(pred), data) == concordance_index(Fixed(np.exp(3 * pred) + 7), data)


@given(SEEDS)
def test_concordance_of_negation_is_complement(seed):
    data = _test_set(seed)
    pred = np.random.default_rng(seed).standard_normal(data.n)
    a, b = concordance_index(Fixed(pred), data), concordance_index(Fixed(-pred), data)
    assert a + b == pytest.approx(1.0, abs=1e-15)


def test_evaluation_report_and_diagnostics():
    data = generate_dataset(CoxModel(2, 1.0), 200, 4)
    report = evaluate_model(Fixed(np.full(200, 0.7)), data)
    assert report.rmse**2 == pytest.approx(report.l2_error, rel=1e-12, abs=1e-12)
    assert report.l2_total == pytest.approx(200 * report.l2_error)
    assert report.l2_error == pytest.approx(np.mean((data.y_true - 0.7) ** 2))
    d = report.diagnostics
    assert d["n_uncensored"] == int(data.event.sum())
    conc, _, comp = concordance_counts(np.full(200, 0.7), data.time, data.event)
    assert d["comparable_pairs"] == comp
    assert d["concordance_per_event"] == conc / d["n_uncensored"]
    assert set(report.as_dict()) >= {"l2_error", "rmse", "concordance", "n_test", "diagnostics"}
    undefined = evaluate_model(Fixed([1.0]), CensoredDataset([[0.0]], [1.0], [0]))
    assert undefined.concordance is None and undefined.diagnostics["concordance_undefined"] == 1


def test_risk_error_is_zero_without_censoring():
    rng = np.random.default_rng(5)
    y = rng.exponential(size=100)
    data = CensoredDataset(rng.random((100, 2)), y, np.ones(100))
    assert risk_estimation_error(data, "ipcw_stute", lambda X: 1.0, float(np.mean(y))) == pytest.approx(0.0, abs=1e-14)


def test_oracle_weights_recover_unit_linear_functional():
    m = CoxModel(4)
    m = m.with_lambda(calibrate_lambda(m, 0.75))
    data = generate_dataset(m, 10_000, 0)
    phi = lambda X: np.exp(X @ m.beta)  # noqa: E731
    err = risk_estimation_error(data, "ipcw_oracle", phi, 1.0, censoring_survival=m.censoring_survival)
    assert err < 0.05


@pytest.mark.slow
def test_naive_risk_error_stays_away_from_zero_under_heavy_censoring():
    m = CoxModel(4)
    m = m.with_lambda(calibrate_lambda(m, 0.25))
    phi = lambda X: np.exp(X @ m.beta)  # noqa: E731
    errs = {"naive": [], "ipcw_loo": []}
    for s in range(20):
        data = generate_dataset(m, 4000, np.random.SeedSequence(4, spawn_key=(s,)))
        for v in errs:
            errs[v].append(risk_estimation_error(data, v, phi, 1.0))
    assert np.median(errs["naive"]) >= 2 * np.median(errs["ipcw_loo"])
