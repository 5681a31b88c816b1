"""Subsampled two-segment likelihood estimate at ``O(V)`` ratio evaluations.

Instead of summing all ``K^2`` boundary ratios, ``V`` index pairs are
drawn i.i.d. from a positive distribution ``beta`` and each drawn ratio is
importance-weighted by ``1 / beta``.  Conditionally on the two filters'
output the estimate is unbiased for the full double-sum estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True)
class PairSampler:
    """Distribution over ``(k, l)`` pairs and the number of draws.

    ``beta(k, l) = row(k) * col(l)``.  ``uniform`` is ``1 / (K_1 K_2)``;
    ``stratified`` keeps ``k`` uniform and favours second-segment particles
    whose first state is likely under a transition from the first
    segment's mean end state, mixed with ``mix`` of the uniform law so that
    every pair keeps positive mass.

    Exactly one of ``n_draws`` and ``exponent`` sets ``V``; with
    ``exponent=s``, ``V = ceil(K ** s)``.
    """

    kind: str = "uniform"
    n_draws: int | None = None
    exponent: float = 1.0
    mix: float = 0.1

    def __post_init__(self):
        if self.kind not in ("uniform", "stratified"):
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.n_draws is not None and self.n_draws < 1:
            raise ValueError("n_draws must be >= 1")
        if not 0.0 < self.mix <= 1.0:
            raise ValueError("mix must lie in (0, 1]")

    def draws_for(self, n_particles) -> int:
        if self.n_draws is not None:
            return int(self.n_draws)
        return max(1, math.ceil(n_particles**self.exponent - 1e-9))

    def marginals(self, model, seg1, seg2):
        """Row and column probabilities; costs ``O(K)`` density evaluations."""
        k1, k2 = seg1.n_particles, seg2.n_particles
        row = np.full(k1, 1.0 / k1)
        if self.kind == "uniform":
            return row, np.full(k2, 1.0 / k2)
        proxy = model.transition_log_density(np.mean(seg1.last_states), seg2.first_states, seg2.t_start)
        col = np.exp(proxy - logsumexp(proxy))
        col = (1.0 - self.mix) * col + self.mix / k2
        return row, col / col.sum()


@dataclass(frozen=True)
class SubsampleResult:
    log_lambda: float
    n_draws: int
    n_ratio_evals: int


def pair_log_ratios(model, seg1, seg2, k, l, initializer=None):
    """Boundary log-ratios at the given index pairs only."""
    r = seg2.initializer if initializer is None else initializer
    first = seg2.first_states[l]
    return model.transition_log_density(seg1.last_states[k], first, seg2.t_start) - r.log_density(first)


def subsampled_likelihood(model, seg1, seg2, sampler: PairSampler, rng, initializer=None) -> SubsampleResult:
    """Log of the subsampled likelihood estimate, in the weight kernel's units.

    Never materialises the ``K_1 x K_2`` ratio matrix.
    """
    k1, k2 = seg1.n_particles, seg2.n_particles
    n_draws = sampler.draws_for(int(round(math.sqrt(k1 * k2))))
    row, col = sampler.marginals(model, seg1, seg2)
    k = rng.choice(k1, size=n_draws, p=row)
    l = rng.choice(k2, size=n_draws, p=col)
    beta = row[k] * col[l]
    if not (beta > 0).all():
        raise ValueError("pair distribution has zero mass on a drawn pair")
    log_ratio = pair_log_ratios(model, seg1, seg2, k, l, initializer)
    log_mean = float(logsumexp(log_ratio - np.log(beta))) - math.log(k1 * k2 * n_draws)
    log_wbar = float(np.sum(seg1.log_wbar) + np.sum(seg2.log_wbar))
    return SubsampleResult(log_wbar + log_mean, n_draws, int(log_ratio.size))
