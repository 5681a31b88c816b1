import itertools

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from segmented_pf import LinearGaussianHMM, ModelParams


@pytest.fixture
def params():
    return ModelParams(a=0.8, sigma_x2=1.0, sigma_y2=1.0)


@pytest.fixture
def model(params):
    return LinearGaussianHMM(params)


def dense_joint(params, y):
    """Brute-force joint-Gaussian oracle: log-likelihood, smoothed and filtered means."""
    y = np.asarray(y, dtype=float)
    n = y.size
    lags = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    sxx = params.sigma_x2 * params.a**lags
    syy = sxx + params.sigma_y2 * np.eye(n)
    loglik = multivariate_normal(np.zeros(n), syy).logpdf(y)
    smoothed = sxx @ np.linalg.solve(syy, y)
    filtered = np.array(
        [(sxx[t, : t + 1] @ np.linalg.solve(syy[: t + 1, : t + 1], y[: t + 1])) for t in range(n)]
    )
    return loglik, smoothed, filtered


def enumerate_tuples(segments, boundaries, psi_coords=None):
    """Sum over every cross-segment tuple of the ratio product (and of psi times it)."""
    ks = [s.n_particles for s in segments]
    n_total = segments[-1].t_start + segments[-1].n_stages - 1
    starts = [s.t_start for s in segments]
    den, num = 0.0, 0.0
    per_particle = [np.zeros(k) for k in ks], [np.zeros(k) for k in ks]
    for tup in itertools.product(*(range(k) for k in ks)):
        w = 1.0
        for m in range(1, len(segments)):
            w *= np.exp(boundaries[m - 1].log_entries[tup[m - 1], tup[m]])
        val = 0.0
        if psi_coords is not None:
            for u in psi_coords:
                assert 1 <= u <= n_total
                m = max(i for i, s in enumerate(starts) if s <= u)
                val += segments[m].paths[tup[m], u - starts[m]]
        den += w
        num += w * val
        for m, k in enumerate(tup):
            per_particle[0][m][k] += w
            per_particle[1][m][k] += w * val
    return den, num, per_particle
