"""Large-K Monte Carlo checks (lazy boundary matrices, several minutes)."""

import numpy as np
import pytest

from segmented_pf import LinearGaussianHMM, kalman_filter, likelihood_estimate, run_segments, simulate_hmm
from segmented_pf.experiments import ExperimentConfig, run_table1

pytestmark = pytest.mark.slow


def test_normalization_converges_at_large_k(params):
    model = LinearGaussianHMM(params)
    ratios = []
    for seed in range(10):
        _, y = simulate_hmm(params, 10, 500 + seed)
        segs, bounds = run_segments(model, y, 2, 10_000, seed=seed)
        log_hat = likelihood_estimate(segs, bounds) + 10 * model.weight_log_constant()
        ratios.append(np.exp(log_hat - kalman_filter(params, y).log_likelihood))
    assert abs(np.median(ratios) - 1.0) < 0.05


def test_table1_mse_shrinks_with_many_particles():
    base = ExperimentConfig(U=50, M=5, replicates=20, u_list=[5, 10, 50], seed=3)
    small = {row["u"]: row for row in run_table1(base.replace(K=500))}
    large = {row["u"]: row for row in run_table1(base.replace(K=10_000))}
    for u in (5, 10, 50):
        for method in ("standard", "segmented-prior", "segmented-window"):
            assert large[u][f"{method}_mse"] < small[u][f"{method}_mse"], (u, method)
