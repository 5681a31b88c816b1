import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import norm

from segmented_pf import (
    BootstrapProposal,
    GaussianInitializer,
    InflatedTransitionProposal,
    LinearGaussianHMM,
    ModelParams,
    PredictorMixtureInitializer,
    bootstrap_weight,
    log_weight,
    simulate_hmm,
)


@pytest.mark.parametrize(
    "bad",
    [
        dict(a=0.0, sigma_x2=1.0, sigma_y2=1.0),
        dict(a=1.0, sigma_x2=1.0, sigma_y2=1.0),
        dict(a=-0.5, sigma_x2=1.0, sigma_y2=1.0),
        dict(a=0.5, sigma_x2=0.0, sigma_y2=1.0),
        dict(a=0.5, sigma_x2=1.0, sigma_y2=-1.0),
        dict(a=float("nan"), sigma_x2=1.0, sigma_y2=1.0),
    ],
)
def test_invalid_params_rejected(bad):
    with pytest.raises(ValueError):
        ModelParams(**bad)


def test_simulate_rejects_bad_length(params):
    with pytest.raises(ValueError):
        simulate_hmm(params, 0, 1)


def test_simulate_is_deterministic(params):
    x1, y1 = simulate_hmm(params, 50, 123)
    x2, y2 = simulate_hmm(params, 50, 123)
    assert np.array_equal(x1, x2) and np.array_equal(y1, y2)
    assert not np.array_equal(simulate_hmm(params, 50, 124)[0], x1)


def test_simulate_stationary_moments(params):
    x, y = simulate_hmm(params, 100_000, 7)
    lag1 = np.corrcoef(x[:-1], x[1:])[0, 1]
    assert abs(lag1 - 0.8) < 0.01
    assert abs(x.var() - 1.0) < 0.05
    assert abs(np.var(y - x) - 1.0) < 0.02


def test_stationary_variance_across_paths(params):
    xs = np.array([simulate_hmm(params, 50, s)[0] for s in range(4000)])
    var = xs.var(axis=0)
    assert np.all(np.abs(var - 1.0) < 0.1)


def test_bootstrap_weight_values(params):
    assert bootstrap_weight(1.3, 1.3, params) == 0.0
    assert bootstrap_weight(0.0, 2.0, params) == -2.0
    p2 = ModelParams(0.8, 1.0, 0.5)
    assert bootstrap_weight(0.0, 1.0, p2) == -1.0


@pytest.mark.parametrize("sigma_y2", [0.25, 1.0, 3.0])
def test_bootstrap_kernel_integral(sigma_y2):
    p = ModelParams(0.8, 1.0, sigma_y2)
    val, _ = integrate.quad(lambda y: np.exp(bootstrap_weight(0.7, y, p)), -np.inf, np.inf)
    assert val == pytest.approx(np.sqrt(2 * np.pi * sigma_y2), rel=1e-9)


def test_weight_constant_restores_emission_density(model):
    x = np.linspace(-2, 2, 7)
    full = model.emission_log_density(x, 0.4)
    assert np.allclose(model.weight_log_kernel(x, 0.4) + model.weight_log_constant(), full, atol=1e-14)
    assert np.allclose(full, norm.logpdf(0.4, loc=x, scale=1.0), atol=1e-14)


def test_densities_match_scipy(model, params):
    rng = np.random.default_rng(0)
    xp, x = rng.normal(size=20), rng.normal(size=20)
    assert np.allclose(
        model.transition_log_density(xp, x),
        norm.logpdf(x, params.a * xp, np.sqrt(params.innovation_var)),
        atol=1e-13,
    )
    assert np.allclose(model.initial_log_density(x), norm.logpdf(x, 0, 1), atol=1e-13)


def test_proposal_dominates_transition(model):
    rng = np.random.default_rng(1)
    xp, x = rng.normal(scale=3, size=1000), rng.normal(scale=3, size=1000)
    for prop in (BootstrapProposal(model), InflatedTransitionProposal(model, 3.0)):
        p = model.transition_log_density(xp, x)
        q = prop.log_density(xp, x, 2)
        assert np.all(np.isfinite(q[np.isfinite(p)]))


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=2, max_size=10),
    st.floats(-5, 5),
    st.floats(-3, 3),
)
def test_generic_weight_differences_match_emission(xs, y, x_prev):
    model = LinearGaussianHMM(ModelParams(0.8, 1.0, 1.0))
    xs = np.array(xs)
    prop = BootstrapProposal(model)
    lw = log_weight(model, prop, y, 3, xs, x_prev=np.full_like(xs, x_prev))
    # the ratio form g p / q with q = p, computed without the bootstrap shortcut
    generic = (
        model.emission_log_density(xs, y)
        + model.transition_log_density(x_prev, xs)
        - prop.log_density(x_prev, xs, 3)
    )
    assert np.allclose(np.diff(lw), np.diff(generic), atol=1e-10)


def test_non_bootstrap_weight_carries_ratio(model):
    prop = InflatedTransitionProposal(model, 2.0)
    xs, xp = np.array([0.1, -0.4]), np.array([0.3, 0.2])
    lw = log_weight(model, prop, 0.5, 4, xs, x_prev=xp)
    expected = bootstrap_weight(xs, 0.5, model.params) + model.transition_log_density(xp, xs) - prop.log_density(xp, xs, 4)
    assert np.allclose(lw, expected)
    init = GaussianInitializer(0.2, 0.7)
    lw0 = log_weight(model, prop, 0.5, 1, xs, initializer=init)
    assert np.allclose(lw0, bootstrap_weight(xs, 0.5, model.params))


def test_predictor_mixture_is_a_density(model):
    prev = np.array([-1.0, 0.2, 0.9])
    r = PredictorMixtureInitializer(model, prev)
    val, _ = integrate.quad(lambda x: np.exp(r.log_density(x))[0], -np.inf, np.inf)
    assert val == pytest.approx(1.0, rel=1e-9)
    draws = r.sample(50_000, np.random.default_rng(3))
    assert draws.mean() == pytest.approx(0.8 * prev.mean(), abs=0.02)


def test_gaussian_initializer_rejects_bad_variance():
    with pytest.raises(ValueError):
        GaussianInitializer(0.0, 0.0)
