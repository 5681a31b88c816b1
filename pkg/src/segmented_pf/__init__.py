"""Segmented (parallel) particle filters for scalar hidden Markov models."""

from ._errors import DegenerateJoinError, DegenerateWeightsError, DominanceError, SegmentedFilterError
from .estimator import KalmanSmoother, SegmentedParticleSmoother, run_segments
from .filter import (
    SegmentConfig,
    SegmentOutput,
    estimate_initializer,
    multinomial_resample,
    run_segment,
    stream_rng,
)
from .hmm import (
    BootstrapProposal,
    GaussianInitializer,
    HiddenMarkovModel,
    InflatedTransitionProposal,
    LinearGaussianHMM,
    ModelParams,
    ModelPriorInitializer,
    PredictorMixtureInitializer,
    SegmentInitializer,
    bootstrap_weight,
    log_weight,
    simulate_hmm,
)
from .join import (
    BoundaryMatrix,
    EstimateReport,
    Functional,
    LazyBoundaryMatrix,
    SegmentJoin,
    allocate_particles,
    boundary_matrix,
    estimate_report,
    latent_estimate,
    likelihood_estimate,
    variance_estimate,
)
from .kalman import KalmanState, SmootherState, kalman_filter, predictive_moments, rts_smoother
from .subsample import PairSampler, SubsampleResult, subsampled_likelihood

__version__ = "0.1.0"

__all__ = [
    "BootstrapProposal",
    "BoundaryMatrix",
    "DegenerateJoinError",
    "DegenerateWeightsError",
    "DominanceError",
    "EstimateReport",
    "Functional",
    "GaussianInitializer",
    "HiddenMarkovModel",
    "InflatedTransitionProposal",
    "KalmanSmoother",
    "KalmanState",
    "LazyBoundaryMatrix",
    "LinearGaussianHMM",
    "ModelParams",
    "ModelPriorInitializer",
    "PairSampler",
    "PredictorMixtureInitializer",
    "SegmentConfig",
    "SegmentInitializer",
    "SegmentJoin",
    "SegmentOutput",
    "SegmentedFilterError",
    "SegmentedParticleSmoother",
    "SmootherState",
    "SubsampleResult",
    "allocate_particles",
    "bootstrap_weight",
    "boundary_matrix",
    "estimate_initializer",
    "estimate_report",
    "kalman_filter",
    "latent_estimate",
    "likelihood_estimate",
    "log_weight",
    "multinomial_resample",
    "predictive_moments",
    "rts_smoother",
    "run_segment",
    "run_segments",
    "simulate_hmm",
    "stream_rng",
    "subsampled_likelihood",
    "variance_estimate",
]
