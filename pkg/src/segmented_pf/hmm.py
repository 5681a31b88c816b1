"""Scalar hidden Markov models, segment initializers and proposals.

Everything works on 1-d numpy arrays of particle states and returns
log-densities; nothing is ever exponentiated here.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

LOG_2PI = float(np.log(2.0 * np.pi))


def _normal_logpdf(x, mean, var):
    # in place: this runs on K x K boundary blocks
    d = np.subtract(x, mean, dtype=float)
    d *= d
    d *= -0.5 / var
    d += -0.5 * (LOG_2PI + np.log(var))
    return d


@dataclass(frozen=True)
class ModelParams:
    """Static parameter ``(a, sigma_x2, sigma_y2)`` of the AR(1)-plus-noise model.

    ``sigma_x2`` is the *stationary* latent variance, so the innovation
    variance is ``(1 - a**2) * sigma_x2``.
    """

    a: float
    sigma_x2: float
    sigma_y2: float

    def __post_init__(self):
        for name in ("a", "sigma_x2", "sigma_y2"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if not 0.0 < self.a < 1.0:
            raise ValueError(f"a must lie in (0, 1), got {self.a!r}")
        if self.sigma_x2 <= 0.0:
            raise ValueError(f"sigma_x2 must be positive, got {self.sigma_x2!r}")
        if self.sigma_y2 <= 0.0:
            raise ValueError(f"sigma_y2 must be positive, got {self.sigma_y2!r}")
        if self.innovation_var <= 0.0:
            raise ValueError("innovation variance (1 - a^2) * sigma_x2 underflows to zero")

    @property
    def innovation_var(self) -> float:
        return (1.0 - self.a**2) * self.sigma_x2


class HiddenMarkovModel(ABC):
    """Interface for a scalar-state HMM.

    Stage indices ``t`` are 1-based, matching the observation index.
    All methods are vectorised over particle arrays.
    """

    @abstractmethod
    def initial_log_density(self, x): ...

    @abstractmethod
    def sample_initial(self, n, rng): ...

    @abstractmethod
    def transition_log_density(self, x_prev, x, t): ...

    @abstractmethod
    def sample_transition(self, x_prev, t, rng): ...

    @abstractmethod
    def emission_log_density(self, x, y, t): ...

    def weight_log_kernel(self, x, y, t):
        """Log of the emission factor used inside resampling weights.

        Defaults to the normalised emission density; subclasses may drop
        constants, in which case :meth:`weight_log_constant` must return
        the dropped amount.
        """
        return self.emission_log_density(x, y, t)

    def weight_log_constant(self, t) -> float:
        """``emission_log_density - weight_log_kernel`` at stage ``t``."""
        return 0.0


class LinearGaussianHMM(HiddenMarkovModel):
    """``X_t = a X_{t-1} + e_t``, ``Y_t = X_t + n_t`` with a stationary start.

    The resampling weight kernel is ``exp(-(y - x)^2 / (2 sigma_y2))``
    without the Gaussian normalising constant, so likelihood estimates
    built from it must be shifted by ``-0.5 * log(2 pi sigma_y2)`` per
    observation (see :meth:`weight_log_constant`).
    """

    def __init__(self, params: ModelParams):
        self.params = params

    def __repr__(self):
        p = self.params
        return f"LinearGaussianHMM(a={p.a}, sigma_x2={p.sigma_x2}, sigma_y2={p.sigma_y2})"

    def initial_log_density(self, x):
        return _normal_logpdf(np.asarray(x, dtype=float), 0.0, self.params.sigma_x2)

    def sample_initial(self, n, rng):
        return rng.normal(0.0, np.sqrt(self.params.sigma_x2), size=n)

    def transition_log_density(self, x_prev, x, t=None):
        p = self.params
        return _normal_logpdf(np.asarray(x, dtype=float), p.a * np.asarray(x_prev), p.innovation_var)

    def sample_transition(self, x_prev, t, rng):
        p = self.params
        x_prev = np.asarray(x_prev, dtype=float)
        return p.a * x_prev + rng.normal(0.0, np.sqrt(p.innovation_var), size=x_prev.shape)

    def emission_log_density(self, x, y, t=None):
        return _normal_logpdf(y, np.asarray(x, dtype=float), self.params.sigma_y2)

    def weight_log_kernel(self, x, y, t=None):
        return bootstrap_weight(x, y, self.params)

    def weight_log_constant(self, t=None) -> float:
        return -0.5 * (LOG_2PI + np.log(self.params.sigma_y2))


def bootstrap_weight(x, y, params: ModelParams):
    """Unnormalised Gaussian log-kernel ``-(y - x)^2 / (2 sigma_y2)``."""
    return -((y - np.asarray(x, dtype=float)) ** 2) / (2.0 * params.sigma_y2)


def simulate_hmm(params: ModelParams, n_steps: int, seed=None):
    """Draw a latent path and observations of length ``n_steps``.

    Returns
    -------
    x, y : ndarray of shape (n_steps,)
    """
    if not isinstance(params, ModelParams):
        raise TypeError("params must be a ModelParams instance")
    n_steps = int(n_steps)
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    rng = np.random.default_rng(seed)
    innov = rng.normal(0.0, np.sqrt(params.innovation_var), size=n_steps)
    noise = rng.normal(0.0, np.sqrt(params.sigma_y2), size=n_steps)
    x = np.empty(n_steps)
    x[0] = rng.normal(0.0, np.sqrt(params.sigma_x2))
    for t in range(1, n_steps):
        x[t] = params.a * x[t - 1] + innov[t]
    return x, x + noise


# --- segment initializers r_m -------------------------------------------


class SegmentInitializer(ABC):
    """Proper density used in place of the transition at a segment's first stage."""

    kind: str = ""

    @abstractmethod
    def log_density(self, x): ...

    @abstractmethod
    def sample(self, n, rng): ...


class ModelPriorInitializer(SegmentInitializer):
    """The model's own initial density, used by the first segment."""

    kind = "model-prior"

    def __init__(self, model: HiddenMarkovModel):
        self.model = model

    def log_density(self, x):
        return self.model.initial_log_density(x)

    def sample(self, n, rng):
        return self.model.sample_initial(n, rng)


class GaussianInitializer(SegmentInitializer):
    kind = "fixed-gaussian"

    def __init__(self, mean: float, var: float):
        if not var > 0.0:
            raise ValueError(f"var must be positive, got {var!r}")
        self.mean = float(mean)
        self.var = float(var)

    def __repr__(self):
        return f"GaussianInitializer(mean={self.mean!r}, var={self.var!r})"

    def log_density(self, x):
        return _normal_logpdf(np.asarray(x, dtype=float), self.mean, self.var)

    def sample(self, n, rng):
        return rng.normal(self.mean, np.sqrt(self.var), size=n)


class PredictorMixtureInitializer(SegmentInitializer):
    """``r(x) = K^-1 sum_k p(x | x_prev[k])`` over the previous segment's end states.

    Couples a segment to its predecessor, so it defeats parallel execution;
    it exists as a reference choice that makes the boundary factor exactly 1.
    """

    kind = "predictor-mixture"

    def __init__(self, model: HiddenMarkovModel, prev_last_states, t=None):
        self.model = model
        self.prev_last_states = np.asarray(prev_last_states, dtype=float)
        self.t = t

    def log_density(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        logp = self.model.transition_log_density(self.prev_last_states[:, None], x[None, :], self.t)
        return logsumexp(logp, axis=0) - np.log(self.prev_last_states.size)

    def sample(self, n, rng):
        parents = rng.integers(self.prev_last_states.size, size=n)
        return self.model.sample_transition(self.prev_last_states[parents], self.t, rng)


# --- proposals q_t ------------------------------------------------------


class BootstrapProposal:
    """Propose from the transition, and from ``r_m`` at a segment's first stage."""

    is_bootstrap = True

    def __init__(self, model: HiddenMarkovModel):
        self.model = model

    def sample_first(self, initializer, n, t, rng):
        return initializer.sample(n, rng)

    def first_log_density(self, initializer, x, t):
        return initializer.log_density(x)

    def sample(self, x_prev, t, rng):
        return self.model.sample_transition(x_prev, t, rng)

    def log_density(self, x_prev, x, t):
        return self.model.transition_log_density(x_prev, x, t)


class InflatedTransitionProposal(BootstrapProposal):
    """Linear-Gaussian transition with its innovation variance multiplied by ``scale``.

    A non-bootstrap proposal, so weights carry the ``p / q`` correction.
    """

    is_bootstrap = False

    def __init__(self, model: LinearGaussianHMM, scale: float = 2.0):
        super().__init__(model)
        if not scale > 0.0:
            raise ValueError("scale must be positive")
        self.scale = float(scale)

    def _var(self):
        return self.scale * self.model.params.innovation_var

    def sample(self, x_prev, t, rng):
        x_prev = np.asarray(x_prev, dtype=float)
        return self.model.params.a * x_prev + rng.normal(0.0, np.sqrt(self._var()), size=x_prev.shape)

    def log_density(self, x_prev, x, t):
        return _normal_logpdf(np.asarray(x, dtype=float), self.model.params.a * np.asarray(x_prev), self._var())


def log_weight(model, proposal, y, t, x, x_prev=None, initializer=None):
    """Generic importance weight ``g(y|x) p(x|x_prev) / q(x|x_prev)`` in log space.

    At a segment's first stage pass ``initializer`` instead of ``x_prev``;
    ``r_m`` then takes the place of the transition density.
    """
    logw = model.weight_log_kernel(x, y, t)
    if proposal.is_bootstrap:
        return logw
    if initializer is not None:
        return logw + initializer.log_density(x) - proposal.first_log_density(initializer, x, t)
    return logw + model.transition_log_density(x_prev, x, t) - proposal.log_density(x_prev, x, t)
