"""Estimator-style front end: ``fit`` an observation sequence, read smoothed means and likelihood."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_geometry, check_observations, check_particle_counts, seed_from
from .filter import SegmentConfig, estimate_initializer, run_segment, stream_rng
from .hmm import (
    BootstrapProposal,
    InflatedTransitionProposal,
    LinearGaussianHMM,
    ModelParams,
    ModelPriorInitializer,
    PredictorMixtureInitializer,
    SegmentInitializer,
)
from .join import LazyBoundaryMatrix, SegmentJoin, allocate_particles, boundary_matrix, likelihood_estimate
from .kalman import kalman_filter, rts_smoother

INITIALIZERS = ("prior", "window", "predictor")
# "auto" switches to lazy boundaries above this many entries (128 MB of float64)
DENSE_BOUNDARY_LIMIT = 1 << 24


def _make_proposal(model, proposal):
    if proposal == "bootstrap":
        return BootstrapProposal(model)
    if proposal == "inflated":
        return InflatedTransitionProposal(model)
    if hasattr(proposal, "sample") and hasattr(proposal, "log_density"):
        return proposal
    raise ValueError(f"unknown proposal {proposal!r}")


def run_segments(
    model,
    y,
    n_segments,
    n_particles,
    initializer="prior",
    seed=0,
    replicate=0,
    window=4,
    n_aux=None,
    proposal="bootstrap",
    workers=1,
    boundary="auto",
):
    """Run every segment filter on ``y`` and build the boundary matrices.

    ``initializer`` is one of ``"prior"`` (model prior at every segment),
    ``"window"`` (Gaussian fitted on the ``window + 1`` observations before
    each segment), ``"predictor"`` (mixture over the previous segment's end
    states; forces sequential execution), or a list of per-segment
    :class:`SegmentInitializer` objects for segments 2..M.

    ``boundary`` is ``"dense"``, ``"lazy"`` (evaluated in row blocks, see
    :class:`LazyBoundaryMatrix`) or ``"auto"``, which goes lazy for
    matrices above ``DENSE_BOUNDARY_LIMIT`` entries.

    Each filter draws from its own stream keyed by ``(seed, replicate, m)``,
    so the result does not depend on ``workers``.
    """
    if boundary not in ("auto", "dense", "lazy"):
        raise ValueError(f"boundary must be auto, dense or lazy, got {boundary!r}")
    y = check_observations(y)
    T = check_geometry(y.size, n_segments)
    counts = check_particle_counts(n_particles, n_segments)
    prop = _make_proposal(model, proposal)

    def initializer_for(m):
        if m == 1:
            return ModelPriorInitializer(model)
        if initializer == "prior":
            return ModelPriorInitializer(model)
        if initializer == "window":
            rng = stream_rng(seed, replicate, m, purpose="initializer")
            k_aux = counts[m - 1] if n_aux is None else n_aux
            return estimate_initializer(model, y, m, T, window, k_aux, rng)
        if isinstance(initializer, (list, tuple)):
            r = initializer[m - 2]
            if not isinstance(r, SegmentInitializer):
                raise TypeError("custom initializers must be SegmentInitializer instances")
            return r
        raise ValueError(f"unknown initializer {initializer!r}; expected one of {INITIALIZERS}")

    def run(m, init):
        cfg = SegmentConfig(
            m=m,
            t_start=(m - 1) * T + 1,
            n_stages=T,
            n_particles=counts[m - 1],
            initializer=init,
            proposal=prop,
            rng=stream_rng(seed, replicate, m),
        )
        return run_segment(model, cfg, y)

    if initializer == "predictor":
        segments = [run(1, ModelPriorInitializer(model))]
        for m in range(2, n_segments + 1):
            prev = segments[-1]
            segments.append(run(m, PredictorMixtureInitializer(model, prev.last_states, (m - 1) * T + 1)))
    elif workers and workers > 1 and n_segments > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            segments = list(pool.map(lambda m: run(m, initializer_for(m)), range(1, n_segments + 1)))
    else:
        segments = [run(m, initializer_for(m)) for m in range(1, n_segments + 1)]

    def join(a, b):
        lazy = boundary == "lazy" or (boundary == "auto" and a.n_particles * b.n_particles > DENSE_BOUNDARY_LIMIT)
        return LazyBoundaryMatrix(model, a, b) if lazy else boundary_matrix(model, a, b)

    boundaries = [join(a, b) for a, b in zip(segments[:-1], segments[1:])]
    return segments, boundaries


class SegmentedParticleSmoother(BaseEstimator):
    """Segmented particle smoother for the linear-Gaussian AR(1)-plus-noise model.

    Splits the observation sequence into ``n_segments`` equal blocks, runs an
    independent bootstrap particle filter on each, and joins them.
    ``n_segments=1`` is the ordinary bootstrap filter.

    Parameters
    ----------
    a, sigma_x2, sigma_y2 : float
        Model parameters (``sigma_x2`` is the stationary latent variance).
    n_segments : int
    n_particles : int or sequence of int
        Particles per segment.
    initializer : {"prior", "window", "predictor"}
        How segments 2..M are started.
    window : int
        Extra look-back for ``initializer="window"``.
    estimator : {"chain", "product"}
        Which likelihood form :meth:`score` reports.
    random_state : int, Generator or None
    n_jobs : int or None
        Threads used to run segments.

    Attributes
    ----------
    smoothed_means_ : ndarray (U,)
        Estimates of ``E[X_u | Y_1:U]`` for every ``u``.
    stderr_ : ndarray (U,)
        In-sample standard errors of ``smoothed_means_``.
    sigma2_pm_ : ndarray (M, U)
        Per-filter variance estimates.
    log_likelihood_, log_likelihood_product_ : float
        Chain- and product-form log-likelihood estimates.
    allocation_ : ndarray (M,)
        Suggested particle counts for the same total budget, from the
        summed per-filter variances.
    """

    def __init__(
        self,
        a=0.8,
        sigma_x2=1.0,
        sigma_y2=1.0,
        n_segments=1,
        n_particles=500,
        initializer="prior",
        window=4,
        n_aux=None,
        proposal="bootstrap",
        estimator="chain",
        random_state=None,
        n_jobs=None,
    ):
        self.a = a
        self.sigma_x2 = sigma_x2
        self.sigma_y2 = sigma_y2
        self.n_segments = n_segments
        self.n_particles = n_particles
        self.initializer = initializer
        self.window = window
        self.n_aux = n_aux
        self.proposal = proposal
        self.estimator = estimator
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _model(self):
        return LinearGaussianHMM(ModelParams(self.a, self.sigma_x2, self.sigma_y2))

    def fit(self, X, y=None):
        obs = check_observations(X)
        if self.estimator not in ("chain", "product"):
            raise ValueError(f"estimator must be 'chain' or 'product', got {self.estimator!r}")
        model = self._model()
        segments, boundaries = run_segments(
            model,
            obs,
            self.n_segments,
            self.n_particles,
            initializer=self.initializer,
            seed=seed_from(self.random_state),
            window=self.window,
            n_aux=self.n_aux,
            proposal=self.proposal,
            workers=self.n_jobs or 1,
        )
        join = SegmentJoin(segments, boundaries, list(range(1, obs.size + 1)))
        means = join.estimates()
        sigma2 = join.variance_terms(means)
        ks = np.array([s.n_particles for s in segments], dtype=float)
        const = obs.size * model.weight_log_constant()

        self.model_ = model
        self.segments_ = segments
        self.boundaries_ = boundaries
        self.n_obs_ = obs.size
        self.smoothed_means_ = means
        self.sigma2_pm_ = sigma2
        self.stderr_ = np.sqrt(np.sum(sigma2 / ks[:, None], axis=0))
        self.log_likelihood_ = likelihood_estimate(segments, boundaries, "chain") + const
        self.log_likelihood_product_ = likelihood_estimate(segments, boundaries, "product") + const
        self.allocation_ = allocate_particles(sigma2.sum(axis=1), int(ks.sum()))
        return self

    def predict(self, X=None):
        """Smoothed-mean estimates; refits when ``X`` is given."""
        if X is not None:
            self.fit(X)
        check_is_fitted(self, "smoothed_means_")
        return self.smoothed_means_

    def score(self, X=None, y=None):
        """Estimated log-likelihood of the observations (refits when ``X`` is given)."""
        if X is not None:
            self.fit(X)
        check_is_fitted(self, "log_likelihood_")
        return self.log_likelihood_ if self.estimator == "chain" else self.log_likelihood_product_


class KalmanSmoother(BaseEstimator):
    """Exact counterpart of :class:`SegmentedParticleSmoother`."""

    def __init__(self, a=0.8, sigma_x2=1.0, sigma_y2=1.0):
        self.a = a
        self.sigma_x2 = sigma_x2
        self.sigma_y2 = sigma_y2

    def fit(self, X, y=None):
        obs = check_observations(X)
        params = ModelParams(self.a, self.sigma_x2, self.sigma_y2)
        self.filter_state_ = kalman_filter(params, obs)
        smooth = rts_smoother(params, self.filter_state_)
        self.filtered_means_ = self.filter_state_.filt_mean
        self.smoothed_means_ = smooth.mean
        self.smoothed_vars_ = smooth.var
        self.log_likelihood_ = self.filter_state_.log_likelihood
        return self

    def predict(self, X=None):
        if X is not None:
            self.fit(X)
        check_is_fitted(self, "smoothed_means_")
        return self.smoothed_means_

    def score(self, X=None, y=None):
        if X is not None:
            self.fit(X)
        check_is_fitted(self, "log_likelihood_")
        return self.log_likelihood_
