import numpy as np
import pytest
from conftest import dense_joint
from scipy.stats import norm

from segmented_pf import KalmanSmoother, ModelParams, kalman_filter, predictive_moments, rts_smoother, simulate_hmm


def test_one_step_likelihood(params):
    ks = kalman_filter(params, [0.0])
    assert ks.log_likelihood == pytest.approx(norm.logpdf(0.0, 0.0, np.sqrt(2.0)), abs=1e-15)


def test_one_step_update(params):
    ks = kalman_filter(params, [1.0])
    assert ks.filt_mean[0] == pytest.approx(0.5, abs=1e-15)
    assert ks.filt_var[0] == pytest.approx(0.5, abs=1e-15)


def test_independence_limit():
    p = ModelParams(1e-8, 1.0, 1.0)
    y = simulate_hmm(ModelParams(0.8, 1.0, 1.0), 20, 4)[1]
    ks = kalman_filter(p, y)
    assert np.allclose(ks.filt_mean, 0.5 * y, atol=1e-6)


@pytest.mark.parametrize("n", [1, 3, 8, 10])
@pytest.mark.parametrize("p", [ModelParams(0.8, 1.0, 1.0), ModelParams(0.3, 2.0, 0.5)])
def test_matches_dense_joint_gaussian(n, p):
    _, y = simulate_hmm(p, n, 100 + n)
    loglik, smoothed, filtered = dense_joint(p, y)
    ks = kalman_filter(p, y)
    sm = rts_smoother(p, ks)
    assert ks.log_likelihood == pytest.approx(loglik, abs=1e-10)
    assert np.allclose(ks.filt_mean, filtered, atol=1e-10)
    assert np.allclose(sm.mean, smoothed, atol=1e-10)


def test_variance_ordering(params):
    _, y = simulate_hmm(params, 40, 2)
    ks = kalman_filter(params, y)
    sm = rts_smoother(params, ks)
    assert np.all(ks.filt_var <= ks.pred_var)
    assert np.all(sm.var <= ks.filt_var + 1e-15)
    assert np.all(sm.var > 0)
    assert sm.mean[-1] == ks.filt_mean[-1]
    assert sm.var[-1] == ks.filt_var[-1]


def test_predictive_moments(params):
    m, v = predictive_moments(params, [2.0])
    assert m == pytest.approx(0.8, abs=1e-15)
    assert v == pytest.approx(0.64 * 0.5 + 0.36, abs=1e-15)


def test_kalman_smoother_estimator(params):
    _, y = simulate_hmm(params, 12, 5)
    est = KalmanSmoother(a=0.8).fit(y)
    assert np.allclose(est.predict(), dense_joint(params, y)[1], atol=1e-10)
    assert est.score() == pytest.approx(dense_joint(params, y)[0], abs=1e-10)
    assert est.get_params()["a"] == 0.8
