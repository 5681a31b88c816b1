import itertools

import numpy as np
import pytest
from scipy.special import logsumexp

from segmented_pf import PairSampler, likelihood_estimate, run_segments, simulate_hmm, subsampled_likelihood
from segmented_pf.subsample import pair_log_ratios


@pytest.fixture
def two_segments(model):
    _, y = simulate_hmm(model.params, 10, 2)
    return run_segments(model, y, 2, 8, seed=4)


class CountingModel:
    def __init__(self, model):
        self.model = model
        self.calls = 0

    def transition_log_density(self, x_prev, x, t=None):
        self.calls += np.broadcast(np.asarray(x_prev), np.asarray(x)).size
        return self.model.transition_log_density(x_prev, x, t)


@pytest.mark.parametrize("kind", ["uniform", "stratified"])
def test_exhaustive_expectation_equals_full_sum(model, two_segments, kind):
    segs, bounds = two_segments
    sampler = PairSampler(kind=kind, n_draws=1)
    row, col = sampler.marginals(model, *segs)
    K1, K2 = segs[0].n_particles, segs[1].n_particles
    pairs = np.array(list(itertools.product(range(K1), range(K2))))
    beta = row[pairs[:, 0]] * col[pairs[:, 1]]
    assert beta.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(beta > 0)
    log_r = pair_log_ratios(model, segs[0], segs[1], pairs[:, 0], pairs[:, 1])
    # a V=1 estimate at pair v is log_wbar + log(ratio_v / beta_v) - log(K1 K2)
    per_pair = sum(s.log_wbar.sum() for s in segs) + log_r - np.log(beta) - np.log(K1 * K2)
    expectation = logsumexp(per_pair, b=beta)
    assert expectation == pytest.approx(likelihood_estimate(segs, bounds), rel=1e-12)


def test_constant_ratios(model, two_segments):
    segs, _ = two_segments

    class Flat:
        log_c = 0.3

        def transition_log_density(self, x_prev, x, t=None):
            return np.broadcast_to(self.log_c, np.broadcast(np.asarray(x_prev), np.asarray(x)).shape)

    flat = Flat()
    # r = 1 everywhere, so each ratio is exp(log_c)
    init = type("Unit", (), {"log_density": staticmethod(lambda x: np.zeros(np.shape(x)))})()
    base = sum(s.log_wbar.sum() for s in segs)
    for v in (1, 5, 64):
        res = subsampled_likelihood(flat, *segs, PairSampler(n_draws=v), np.random.default_rng(v), initializer=init)
        assert res.log_lambda == pytest.approx(base + 0.3, rel=1e-12)


def test_single_draw_is_unbiased_given_segments(model, two_segments):
    segs, bounds = two_segments
    rng = np.random.default_rng(5)
    vals = np.exp([subsampled_likelihood(model, *segs, PairSampler(n_draws=1), rng).log_lambda for _ in range(10_000)])
    full = np.exp(likelihood_estimate(segs, bounds))
    assert abs(vals.mean() - full) < 3 * vals.std(ddof=1) / np.sqrt(vals.size)


def test_predictor_mixture_convergence(model):
    _, y = simulate_hmm(model.params, 10, 3)
    segs, bounds = run_segments(model, y, 2, 100, initializer="predictor", seed=8)
    full = likelihood_estimate(segs, bounds)
    assert full == pytest.approx(sum(s.log_wbar.sum() for s in segs), rel=1e-12)
    rng = np.random.default_rng(0)
    vals = [subsampled_likelihood(model, *segs, PairSampler(exponent=2.0), rng).log_lambda for _ in range(50)]
    assert np.std(vals) < 0.05
    assert abs(np.mean(vals) - full) < 0.05


def test_ratio_evaluations_equal_draws(model, two_segments):
    segs, _ = two_segments
    counter = CountingModel(model)
    res = subsampled_likelihood(counter, *segs, PairSampler(n_draws=13), np.random.default_rng(0))
    assert res.n_draws == res.n_ratio_evals == 13
    assert counter.calls == 13
    counter.calls = 0
    res = subsampled_likelihood(counter, *segs, PairSampler(kind="stratified", n_draws=13), np.random.default_rng(0))
    # K proxy evaluations plus V ratio evaluations
    assert counter.calls == 13 + segs[1].n_particles


def test_draw_count_from_exponent():
    assert PairSampler(exponent=1.0).draws_for(100) == 100
    assert PairSampler(exponent=1.5).draws_for(100) == 1000
    assert PairSampler(exponent=2.0).draws_for(100) == 10_000
    assert PairSampler(n_draws=7).draws_for(100) == 7


def test_sampler_validation():
    with pytest.raises(ValueError):
        PairSampler(kind="sobol")
    with pytest.raises(ValueError):
        PairSampler(n_draws=0)
    with pytest.raises(ValueError):
        PairSampler(mix=0.0)
