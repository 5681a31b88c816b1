"""One particle filter per segment, with multinomial resampling at every stage.

Besides the particle paths, each run records what the joiners need:
per-stage mean weights, first-generation ancestor labels and the
recursive history weights ``H``.  Particle indices are 0-based.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from ._errors import DegenerateWeightsError
from .hmm import BootstrapProposal, GaussianInitializer, SegmentInitializer, log_weight


def stream_rng(seed, *key, purpose="filter"):
    """Independent generator for ``(seed, *key, purpose)``.

    The stream depends only on its own key, never on how many other
    streams were drawn before it, so segments can run in any order.
    """
    tag = zlib.crc32(purpose.encode())
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key) + (tag,))
    return np.random.default_rng(ss)


def multinomial_resample(log_weights, n_out, rng):
    """Draw ``n_out`` i.i.d. indices with probabilities proportional to ``exp(log_weights)``.

    Returns
    -------
    indices : ndarray of int
    probs : ndarray
        Normalised weights ``W``.
    log_wbar : float
        Log of the mean (unnormalised) weight.
    """
    logw = np.asarray(log_weights, dtype=float)
    if np.isnan(logw).any():
        raise DegenerateWeightsError("NaN log-weight")
    top = logw.max()
    if not np.isfinite(top):
        if top == np.inf:
            raise DegenerateWeightsError("infinite weight")
        raise DegenerateWeightsError("all weights are zero: particle collapse")
    scaled = np.exp(logw - top)
    total = scaled.sum()
    probs = scaled / total
    log_wbar = top + np.log(total) - np.log(logw.size)
    indices = rng.choice(logw.size, size=int(n_out), p=probs)
    return indices, probs, float(log_wbar)


@dataclass
class SegmentConfig:
    """Geometry and ingredients of one segment filter.

    ``t_start`` is the 1-based index of the segment's first observation.
    """

    m: int
    t_start: int
    n_stages: int
    n_particles: int
    initializer: SegmentInitializer
    proposal: object = None
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.n_stages < 1 or self.t_start < 1:
            raise ValueError(f"invalid stage range: start={self.t_start}, length={self.n_stages}")


@dataclass(frozen=True)
class SegmentOutput:
    m: int
    t_start: int
    paths: np.ndarray
    ancestors: np.ndarray
    log_wbar: np.ndarray
    log_H: np.ndarray
    log_w_paths: np.ndarray
    initializer: SegmentInitializer = field(repr=False)

    @property
    def n_particles(self) -> int:
        return self.paths.shape[0]

    @property
    def n_stages(self) -> int:
        return self.paths.shape[1]

    @property
    def first_states(self):
        return self.paths[:, 0]

    @property
    def last_states(self):
        return self.paths[:, -1]

    @property
    def stages(self):
        return np.arange(self.t_start, self.t_start + self.n_stages)


def run_segment(model, config: SegmentConfig, observations) -> SegmentOutput:
    """Run PF ``m`` over its stage range.

    At each stage: propose, weight, resample multinomially, then update the
    history weights via ``H~_j = H_j / (K W_j)`` and ``H_k = H~_{B(k)}``.
    Paths are rebuilt at the end from the stored resampling indices.
    """
    y = np.asarray(observations, dtype=float)
    start, n_stages, K = config.t_start, config.n_stages, config.n_particles
    if start - 1 + n_stages > y.size:
        raise ValueError(f"segment {config.m} needs observations up to {start - 1 + n_stages}, have {y.size}")
    rng = config.rng if config.rng is not None else np.random.default_rng()
    proposal = config.proposal if config.proposal is not None else BootstrapProposal(model)

    proposed = np.empty((n_stages, K))
    logws = np.empty((n_stages, K))
    parents = np.empty((n_stages, K), dtype=np.intp)
    log_wbar = np.empty(n_stages)
    log_H = np.zeros(K)
    x = None
    for s in range(n_stages):
        t = start + s
        if s == 0:
            xt = proposal.sample_first(config.initializer, K, t, rng)
            lw = log_weight(model, proposal, y[t - 1], t, xt, initializer=config.initializer)
        else:
            xt = proposal.sample(x, t, rng)
            lw = log_weight(model, proposal, y[t - 1], t, xt, x_prev=x)
        idx, _, lwb = multinomial_resample(lw, K, rng)
        log_H = (log_H - (lw - lwb))[idx]
        x = xt[idx]
        proposed[s], logws[s], parents[s], log_wbar[s] = xt, lw, idx, lwb

    paths = np.empty((K, n_stages))
    log_w_paths = np.empty((K, n_stages))
    line = np.arange(K)
    for s in range(n_stages - 1, -1, -1):
        line = parents[s, line]
        paths[:, s] = proposed[s, line]
        log_w_paths[:, s] = logws[s, line]
    return SegmentOutput(
        m=config.m,
        t_start=start,
        paths=paths,
        ancestors=line,
        log_wbar=log_wbar,
        log_H=log_H,
        log_w_paths=log_w_paths,
        initializer=config.initializer,
    )


def estimate_initializer(model, observations, m, n_stages, window, n_aux, rng, var_floor=None):
    """Gaussian ``r_m`` fitted by an auxiliary bootstrap filter on recent observations.

    The filter starts from the model prior at stage ``(m-1)T - window``,
    runs through stage ``(m-1)T``, and its particles are pushed one
    transition forward; their sample mean and variance define ``r_m``.
    """
    if n_aux < 2:
        raise ValueError("n_aux must be >= 2")
    if m < 2:
        raise ValueError("window estimation applies to segments m >= 2")
    if window < 0:
        raise ValueError("window must be >= 0")
    y = np.asarray(observations, dtype=float)
    last = (m - 1) * n_stages
    first = last - window
    if first < 1 or last > y.size:
        raise ValueError(f"window [{first}, {last}] outside observations 1..{y.size}")
    if var_floor is None:
        var_floor = 1e-8 * model.params.sigma_x2

    x = model.sample_initial(n_aux, rng)
    for t in range(first, last + 1):
        if t > first:
            x = model.sample_transition(x, t, rng)
        idx, _, _ = multinomial_resample(model.weight_log_kernel(x, y[t - 1], t), n_aux, rng)
        x = x[idx]
    x = model.sample_transition(x, last + 1, rng)
    return GaussianInitializer(float(np.mean(x)), max(float(np.var(x, ddof=1)), var_floor))

