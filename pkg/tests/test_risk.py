import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import THREE_POINT, random_dataset
from censored_erm.data import CensoredDataset, RestrictionDomain, ValidationError
from censored_erm.risk import LOSS_VARIANTS, WeightVector, compute_weights, linear_risk_estimate, weighted_risk
from censored_erm.synthetic import CoxModel, generate_dataset

SEEDS = st.integers(0, 2**32 - 1)
IPCW = ("ipcw", "ipcw_loo", "ipcw_knn", "ipcw_stute", "ipcw_oracle")


def _uncensored(n=8, d=2, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.exponential(size=n)
    return CensoredDataset(rng.random((n, d)), y, np.ones(n), y_true=y, c=np.full(n, np.inf))


def _all_weights(data, **kw):
    surv = lambda t, X: np.ones(len(np.atleast_1d(t)))  # noqa: E731
    return {v: compute_weights(data, v, n_neighbors=3, censoring_survival=surv, **kw) for v in LOSS_VARIANTS}


def test_stute_on_uncensored_data_is_uniform():
    data = _uncensored()
    np.testing.assert_array_equal(compute_weights(data, "ipcw_stute").weights, 1 / 8)


def test_observed_weights():
    w = compute_weights(THREE_POINT, "observed")
    np.testing.assert_array_equal(w.weights, [1 / 3, 0.0, 1 / 3])


def test_stute_three_point_weights():
    # the last uncensored point sits after the only censoring; keep that jump
    w = compute_weights(THREE_POINT, "ipcw_stute", drop_last_jump=False)
    np.testing.assert_allclose(w.weights, [1 / 3, 0.0, 2 / 3], rtol=1e-15)
    # with the default, the single (and so last) jump is removed
    np.testing.assert_allclose(compute_weights(THREE_POINT, "ipcw_stute").weights, [1 / 3, 0.0, 1 / 3])


def test_weighted_risk_examples():
    w = WeightVector(np.array([1 / 3, 0.0, 2 / 3]), False, "ipcw_stute")
    assert weighted_risk(THREE_POINT, np.zeros(3), w) == pytest.approx(19 / 3, rel=1e-15)
    assert weighted_risk(THREE_POINT, THREE_POINT.time, w) == 0.0
    assert weighted_risk(THREE_POINT, np.ones(3), WeightVector(np.zeros(3), False, "ipcw")) == 0.0
    with pytest.raises(ValidationError):
        weighted_risk(THREE_POINT, np.zeros(2), w)


def test_linear_risk_examples():
    data = _uncensored(50)
    w = compute_weights(data, "ipcw_stute")
    assert linear_risk_estimate(data, lambda X: np.zeros(len(X)), w) == 0.0
    assert linear_risk_estimate(data, lambda X: 1.0, w) == pytest.approx(np.mean(data.time), rel=1e-14)


def test_oracle_variants_need_truth():
    with pytest.raises(ValidationError):
        compute_weights(THREE_POINT, "oracle")
    with pytest.raises(ValidationError):
        compute_weights(THREE_POINT, "ipcw_oracle")
    with pytest.raises(ValidationError):
        compute_weights(THREE_POINT, "ipcw_forest")


def test_oracle_loss_uses_true_durations():
    data = generate_dataset(CoxModel(2, 1.0), 30, 1)
    w = compute_weights(data, "oracle")
    f = np.full(30, 0.5)
    assert weighted_risk(data, f, w) == pytest.approx(np.mean((data.y_true - 0.5) ** 2), rel=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_no_censoring_all_variants_identical(seed):
    data = _uncensored(40, seed=seed)
    f = np.random.default_rng(seed).random(40)
    ws = _all_weights(data)
    risks = {v: weighted_risk(data, f, w) for v, w in ws.items()}
    assert len(set(risks.values())) == 1, risks
    for w in ws.values():
        np.testing.assert_array_equal(w.weights, ws["naive"].weights)


@pytest.mark.parametrize("variant", IPCW + ("observed",))
@given(seed=SEEDS)
def test_censored_points_get_zero_weight(variant, seed):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng, 20, d=2, int_times=False)
    m = CoxModel(2)
    w = compute_weights(data, variant, bandwidth=0.5, n_neighbors=3, censoring_survival=m.censoring_survival)
    assert np.all(w.weights[~data.event] == 0.0)
    assert np.all(np.isfinite(w.weights)) and np.all(w.weights >= 0)


@pytest.mark.parametrize("variant", LOSS_VARIANTS)
@given(seed=SEEDS)
def test_normalized_weights_sum_to_one(variant, seed):
    data = generate_dataset(CoxModel(2, 1.0), 25, int(seed))
    w = compute_weights(data, variant, normalize=True, bandwidth=0.6, n_neighbors=3,
                        censoring_survival=CoxModel(2, 1.0).censoring_survival)
    if np.any(w.weights > 0):
        assert abs(w.weights.sum() - 1.0) <= 1e-12
    assert w.normalized


@given(seed=SEEDS, q1=st.floats(0.1, 1.0), q2=st.floats(0.1, 1.0))
def test_shrinking_domain_masks_monotonically(seed, q1, q2):
    data = generate_dataset(CoxModel(2, 0.5), 30, int(seed))
    small, big = sorted((q1, q2))
    box = dict(low=[0.1, 0.0], high=[0.9, 1.0])
    w_small = compute_weights(data, "ipcw_stute", domain=RestrictionDomain.from_quantile(data, small, **box))
    w_big = compute_weights(data, "ipcw_stute", domain=RestrictionDomain.from_quantile(data, big))
    assert np.all(w_small.weights <= w_big.weights)
    assert np.all((w_small.weights == 0) | (w_small.weights == w_big.weights))


def test_zero_survival_is_reported():
    # kernel mass at the last point comes only from itself and a censored
    # neighbor that removes all of it; keeping the last jump yields S = 0
    X = np.array([[0.0], [0.01], [5.0]])
    data = CensoredDataset(X, [1.0, 2.0, 3.0], [0, 1, 1])
    w = compute_weights(data, "ipcw", bandwidth=0.1, drop_last_jump=False)
    assert np.all(np.isfinite(w.weights))
    surv = lambda t, X: np.where(np.asarray(t) >= 2.0, 0.0, 1.0)  # noqa: E731
    w = compute_weights(data, "ipcw_oracle", censoring_survival=surv)
    assert w.weights[1] == 0.0 and w.weights[2] == 0.0
    assert w.diagnostics["zero_survival"] == 2


def test_weight_vector_behaves_like_array():
    w = WeightVector(np.array([0.25, 0.75]), True, "ipcw")
    assert np.asarray(w).sum() == 1.0
    assert len(w) == 2
    assert np.array_equal(w.scaled(2.0).weights, [0.5, 1.5])
