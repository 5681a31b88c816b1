"""Joining independent segment filters into likelihood and smoothing estimates.

Every estimator here is a sum over all ``prod_m K_m`` cross-segment
particle tuples of a product of boundary ratios
``p(first_m[j] | last_{m-1}[i]) / r_m(first_m[j])``.  The sum factorises
as a chain of boundary matrices, evaluated in ``O(sum_m K_{m-1} K_m)``
by a forward and a backward sweep.  Each sweep step multiplies by the
max-scaled matrix when its entries span less than ``exp(700)`` and falls
back to log-space sums otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from ._errors import DegenerateJoinError, DominanceError


# exp(-700) is still a normal double, so scaled entries keep every term.
_LINEAR_RANGE = 700.0
# lazy boundary blocks hold about this many entries (32 MB of float64)
_BLOCK_ENTRIES = 1 << 22


@dataclass(frozen=True)
class BoundaryMatrix:
    """Log boundary ratios between segment ``m - 1`` (rows) and ``m`` (columns)."""

    m: int
    log_entries: np.ndarray

    @property
    def shape(self):
        return self.log_entries.shape

    @cached_property
    def log_scale_offset(self) -> float:
        return float(np.max(self.log_entries))

    @cached_property
    def log_range(self) -> float:
        """Spread between the largest and smallest log entries (``inf`` if any is infinite)."""
        hi, lo = self.log_entries.max(), self.log_entries.min()
        return float(hi - lo) if np.isfinite(hi) and np.isfinite(lo) else np.inf

    @cached_property
    def _scaled(self):
        return np.exp(self.log_entries - self.log_scale_offset)

    def scaled(self):
        """``exp(log_entries - log_scale_offset)``."""
        return self._scaled.copy()

    @property
    def linear_safe(self) -> bool:
        """Whether every scaled entry is finite and nonzero."""
        return self.log_range <= _LINEAR_RANGE

    def forward(self, log_v, vals):
        """Push row log-weights ``log_v`` and row values ``vals`` to the columns.

        Returns the column log sums ``log sum_i exp(log_v[i] + B[i, j])`` and
        the matching weighted means of ``vals``.
        """
        if self.linear_safe and np.isfinite(log_v).all():
            return _linear_step(log_v, vals, self._scaled.T, self.log_scale_offset)
        log_tot, probs = _normalise(log_v[:, None] + self.log_entries, axis=0)
        return log_tot, probs.T @ vals

    def backward(self, log_v, vals):
        """Column-to-row counterpart of :meth:`forward`."""
        if self.linear_safe and np.isfinite(log_v).all():
            return _linear_step(log_v, vals, self._scaled, self.log_scale_offset)
        log_tot, probs = _normalise(self.log_entries + log_v[None, :], axis=1)
        return log_tot, probs @ vals

    def log_sum(self) -> float:
        if self.linear_safe:
            return float(self.log_scale_offset + np.log(self._scaled.sum()))
        return float(logsumexp(self.log_entries))


class LazyBoundaryMatrix:
    """Boundary ratios evaluated a block of rows at a time, never stored whole.

    Memory is ``O(block_rows * K_next)`` instead of ``O(K_prev * K_next)``;
    each sweep re-evaluates the transition densities.
    """

    def __init__(self, model, seg_prev, seg_next, initializer=None, block_rows=None):
        r = seg_next.initializer if initializer is None else initializer
        self.m = seg_next.m
        self._model = model
        self._t = seg_next.t_start
        self._last = seg_prev.last_states
        self._first = seg_next.first_states
        self._log_r = np.asarray(r.log_density(self._first), dtype=float)
        if np.isnan(self._log_r).any() or (self._log_r == -np.inf).any():
            raise DominanceError(f"segment {self.m}: initializer density is zero or undefined at a sampled state")
        self.block_rows = int(block_rows) if block_rows else max(1, _BLOCK_ENTRIES // max(self._first.size, 1))

    @property
    def shape(self):
        return (self._last.size, self._first.size)

    def blocks(self):
        """Yield ``(start, stop, log_entries[start:stop])``."""
        for lo in range(0, self._last.size, self.block_rows):
            hi = min(lo + self.block_rows, self._last.size)
            blk = self._model.transition_log_density(self._last[lo:hi, None], self._first[None, :], self._t)
            blk -= self._log_r[None, :]
            if not blk.max() < np.inf:
                raise DominanceError(f"invalid boundary ratio at segment {self.m}")
            yield lo, hi, blk

    def to_dense(self) -> BoundaryMatrix:
        return BoundaryMatrix(self.m, np.concatenate([blk for _, _, blk in self.blocks()], axis=0))

    def _check_alive(self, log_tot):
        dead = log_tot == -np.inf
        if dead.any():
            raise DominanceError(
                f"segment {self.m}: initializer density violates dominance at {int(dead.sum())} first state(s)"
            )

    def forward(self, log_v, vals):
        if np.isfinite(log_v).all() and np.ptp(log_v) <= _LINEAR_RANGE:
            out = self._forward_linear(log_v, vals)
            if out is not None:
                return out
        return self._forward_log(log_v, vals)

    def _forward_linear(self, log_v, vals):
        # one running scalar offset; gives up (returns None) if entries span too much
        top_v = log_v.max()
        v = np.exp(log_v - top_v)
        rhs = np.column_stack([v, v[:, None] * vals])
        acc = np.zeros((self.shape[1], rhs.shape[1]))
        offset, lowest = -np.inf, np.inf
        for lo, hi, blk in self.blocks():
            b_max, b_min = blk.max(), blk.min()
            if b_min == -np.inf:
                return None
            lowest = min(lowest, b_min)
            if b_max > offset:
                acc *= np.exp(offset - b_max)
                offset = b_max
            if offset - lowest > _LINEAR_RANGE:
                return None
            blk -= offset
            np.exp(blk, out=blk)
            acc += blk.T @ rhs[lo:hi]
        with np.errstate(divide="ignore"):
            log_tot = np.log(acc[:, 0]) + offset + top_v
        self._check_alive(log_tot)
        return log_tot, acc[:, 1:] / acc[:, :1]

    def _forward_log(self, log_v, vals):
        n_out = self.shape[1]
        run_max = np.full(n_out, -np.inf)
        acc = np.zeros(n_out)
        acc_vals = np.zeros((n_out, vals.shape[1]))
        alive = np.zeros(n_out, dtype=bool)
        for lo, hi, blk in self.blocks():
            alive |= blk.max(axis=0) > -np.inf
            logits = log_v[lo:hi, None] + blk
            new_max = np.maximum(run_max, logits.max(axis=0))
            ref = np.where(np.isfinite(new_max), new_max, 0.0)
            scale = np.exp(run_max - ref)
            e = np.exp(logits - ref)
            acc = acc * scale + e.sum(axis=0)
            acc_vals = acc_vals * scale[:, None] + e.T @ vals[lo:hi]
            run_max = new_max
        if not alive.all():
            self._check_alive(np.where(alive, 0.0, -np.inf))
        ref = np.where(np.isfinite(run_max), run_max, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_tot = np.log(acc) + ref
            means = np.where(acc[:, None] > 0, acc_vals / acc[:, None], 0.0)
        return log_tot, means

    def backward(self, log_v, vals):
        log_tot = np.empty(self.shape[0])
        out = np.empty((self.shape[0], vals.shape[1]))
        linear = np.isfinite(log_v).all() and np.ptp(log_v) <= _LINEAR_RANGE
        if linear:
            top_v = log_v.max()
            v = np.exp(log_v - top_v)
            rhs = np.column_stack([v, v[:, None] * vals])
        for lo, hi, blk in self.blocks():
            b_max = blk.max()
            if linear and b_max - blk.min() <= _LINEAR_RANGE:
                blk -= b_max
                np.exp(blk, out=blk)
                acc = blk @ rhs
                log_tot[lo:hi] = np.log(acc[:, 0]) + b_max + top_v
                out[lo:hi] = acc[:, 1:] / acc[:, :1]
            else:
                log_tot[lo:hi], probs = _normalise(blk + log_v[None, :], axis=1)
                out[lo:hi] = probs @ vals
        return log_tot, out

    def log_sum(self) -> float:
        return float(logsumexp([logsumexp(blk) for _, _, blk in self.blocks()]))


def boundary_matrix(model, seg_prev, seg_next, initializer=None) -> BoundaryMatrix:
    """Boundary ratios from ``seg_prev``'s last states to ``seg_next``'s first states.

    ``initializer`` defaults to the ``r_m`` that ``seg_next`` was run with.
    """
    r = seg_next.initializer if initializer is None else initializer
    first = seg_next.first_states
    logp = model.transition_log_density(seg_prev.last_states[:, None], first[None, :], seg_next.t_start)
    log_b = logp - r.log_density(first)[None, :]
    if np.isnan(log_b).any():
        raise DominanceError(f"NaN boundary ratio at segment {seg_next.m}")
    dead = ~np.isfinite(log_b).any(axis=0) | (log_b == np.inf).any(axis=0)
    if dead.any():
        raise DominanceError(
            f"segment {seg_next.m}: initializer density violates dominance at "
            f"{int(dead.sum())} first state(s)"
        )
    return BoundaryMatrix(m=seg_next.m, log_entries=log_b)


@dataclass(frozen=True)
class Functional:
    """``psi(x) = constant + sum of x_u over coords`` (coords are 1-based)."""

    coords: tuple = ()
    constant: float = 0.0

    @classmethod
    def coordinate(cls, u):
        return cls(coords=(int(u),))

    @classmethod
    def additive(cls, coords, constant=0.0):
        return cls(coords=tuple(int(u) for u in coords), constant=float(constant))


def _as_functionals(psi):
    if isinstance(psi, Functional):
        return [psi]
    if isinstance(psi, (int, np.integer)):
        return [Functional.coordinate(psi)]
    return [p if isinstance(p, Functional) else Functional.coordinate(p) for p in psi]


def _segment_terms(segments, functionals):
    """Per-segment ``(K_m, F)`` matrices of each functional's coordinates owned by that segment."""
    n_total = segments[-1].t_start + segments[-1].n_stages - 1
    terms = [np.zeros((seg.n_particles, len(functionals))) for seg in segments]
    bounds = [seg.t_start for seg in segments]
    for f, psi in enumerate(functionals):
        for u in psi.coords:
            if not 1 <= u <= n_total:
                raise ValueError(f"coordinate {u} outside 1..{n_total}")
            m = int(np.searchsorted(bounds, u, side="right")) - 1
            terms[m][:, f] += segments[m].paths[:, u - segments[m].t_start]
        terms[0][:, f] += psi.constant
    return terms


def _normalise(logits, axis):
    top = logits.max(axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.exp(logits - top)
    s = e.sum(axis=axis, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_total = np.squeeze(top + np.log(s), axis=axis)
        probs = np.where(s > 0, e / s, 0.0)
    return log_total, probs


def _linear_step(log_v, vals, mat, offset):
    """One sweep step through a scaled boundary matrix.

    ``mat[j, i]`` maps entries ``i`` of the incoming vector to output ``j``.
    Returns the outgoing log sums and the weighted means of ``vals``.
    """
    top = log_v.max()
    v = np.exp(log_v - top)
    s = mat @ v
    with np.errstate(divide="ignore", invalid="ignore"):
        means = (mat @ (v[:, None] * vals)) / s[:, None]
        log_tot = np.log(s) + top + offset
    return log_tot, np.where(s[:, None] > 0, means, 0.0)


class SegmentJoin:
    """Forward/backward sweeps over the boundary-matrix chain.

    For particle ``l`` of segment ``m`` the sweeps give ``log_weight(m)[l]``,
    the log of the summed ratio products over all tuples passing through
    ``l``, and ``conditional(m)[l]``, the ratio-weighted mean of each
    functional over those tuples.  Both are independent of which ``m`` is
    used for aggregation, up to rounding.
    """

    def __init__(self, segments: Sequence, boundaries: Sequence[BoundaryMatrix], psi=()):
        segments = list(segments)
        boundaries = list(boundaries)
        if not segments:
            raise ValueError("need at least one segment")
        if len(boundaries) != len(segments) - 1:
            raise ValueError(f"{len(segments)} segments need {len(segments) - 1} boundaries, got {len(boundaries)}")
        for b, prev, nxt in zip(boundaries, segments[:-1], segments[1:]):
            if b.shape != (prev.n_particles, nxt.n_particles):
                raise ValueError(
                    f"boundary {b.m} has shape {b.shape}, expected {(prev.n_particles, nxt.n_particles)}"
                )
        self.segments = segments
        self.boundaries = boundaries
        self.functionals = _as_functionals(psi)
        terms = _segment_terms(segments, self.functionals)
        n_seg = len(segments)

        log_f = [np.zeros(segments[0].n_particles)]
        fwd = [terms[0]]
        for m in range(1, n_seg):
            log_tot, nxt = boundaries[m - 1].forward(log_f[-1], fwd[-1])
            log_f.append(log_tot)
            fwd.append(nxt + terms[m])

        log_g = [np.zeros(segments[-1].n_particles)]
        bwd = [np.zeros_like(terms[-1])]
        for m in range(n_seg - 2, -1, -1):
            log_tot, prev = boundaries[m].backward(log_g[0], bwd[0] + terms[m + 1])
            bwd.insert(0, prev)
            log_g.insert(0, log_tot)

        self._log_f, self._log_g = log_f, log_g
        self._fwd, self._bwd = fwd, bwd
        self.log_chain_sum = float(logsumexp(log_f[-1]))

    def log_weight(self, m):
        """0-based segment index ``m``."""
        return self._log_f[m] + self._log_g[m]

    def conditional(self, m):
        return self._fwd[m] + self._bwd[m]

    def _check(self):
        if not np.isfinite(self.log_chain_sum):
            raise DegenerateJoinError("joined normalizer is zero")

    def estimates(self):
        """Ratio estimates of every functional, shape ``(F,)``."""
        self._check()
        lw = self.log_weight(0)
        w = np.exp(lw - lw.max())
        vals = np.ascontiguousarray(self.conditional(0).T)
        return np.sum(vals * w, axis=1) / np.sum(w)

    def variance_terms(self, center):
        """``sigma^2_Pm`` estimates, shape ``(M, F)``, grouped by first-generation ancestors."""
        self._check()
        center = np.broadcast_to(np.asarray(center, dtype=float), (len(self.functionals),))
        out = np.empty((len(self.segments), len(self.functionals)))
        for m, seg in enumerate(self.segments):
            K = seg.n_particles
            pi = np.exp(self.log_weight(m) - self.log_chain_sum)
            dev = pi[:, None] * (self.conditional(m) - center[None, :])
            q = np.zeros((K, dev.shape[1]))
            np.add.at(q, seg.ancestors, dev)
            q *= K
            out[m] = np.sum(q**2, axis=0) / K
        return out


def log_mean_weight_total(segments) -> float:
    return float(sum(np.sum(seg.log_wbar) for seg in segments))


def likelihood_estimate(segments, boundaries, form="chain") -> float:
    """Log-likelihood estimate in the weight kernel's units.

    ``chain`` sums over all joint particle tuples; ``product`` multiplies
    independent per-boundary double sums.  They coincide for two or fewer
    segments.
    """
    segments = list(segments)
    if form == "chain":
        join = SegmentJoin(segments, boundaries)
        log_norm = sum(np.log(seg.n_particles) for seg in segments)
        return log_mean_weight_total(segments) + join.log_chain_sum - log_norm
    if form == "product":
        boundaries = list(boundaries)
        if len(boundaries) != len(segments) - 1:
            raise ValueError("need one boundary per adjacent segment pair")
        total = log_mean_weight_total(segments)
        for b in boundaries:
            k_prev, k_next = b.shape
            total += b.log_sum() - np.log(k_prev) - np.log(k_next)
        return total
    raise ValueError(f"unknown form {form!r}; expected 'chain' or 'product'")


def latent_estimate(segments, boundaries, psi):
    """Ratio estimate of ``E[psi(X) | Y]``; a float for one functional, else an array."""
    join = SegmentJoin(segments, boundaries, psi)
    est = join.estimates()
    return float(est[0]) if isinstance(psi, (Functional, int, np.integer)) else est


def variance_estimate(segments, boundaries, psi, psi_tilde=None):
    """Per-filter variance estimates and the implied standard error of the ratio estimate.

    ``Var(psi_tilde) ~ sum_m sigma2[m] / K_m``.  ``psi_tilde`` is the
    plug-in centre; it is recomputed when omitted.
    """
    join = SegmentJoin(segments, boundaries, psi)
    center = join.estimates() if psi_tilde is None else psi_tilde
    sigma2 = join.variance_terms(center)
    ks = np.array([seg.n_particles for seg in join.segments], dtype=float)
    stderr = np.sqrt(np.sum(sigma2 / ks[:, None], axis=0))
    if isinstance(psi, (Functional, int, np.integer)):
        return sigma2[:, 0], float(stderr[0])
    return sigma2, stderr


def allocate_particles(sigma2_pm, budget, floor=2):
    """Split ``budget`` particles across filters with ``K_m`` proportional to ``sigma_Pm``.

    Rounds by largest remainder; filters with zero variance, or whose
    share would fall below ``floor``, get ``floor``.
    """
    s2 = np.asarray(sigma2_pm, dtype=float).ravel()
    if (s2 < 0).any() or not np.isfinite(s2).all():
        raise ValueError("variances must be finite and non-negative")
    budget = int(budget)
    n = s2.size
    if budget < floor * n:
        raise ValueError(f"budget {budget} below the minimum {floor * n} for {n} filters")
    sd = np.sqrt(s2)
    fixed = sd == 0
    while True:
        free = ~fixed
        remaining = budget - floor * int(fixed.sum())
        alloc = np.full(n, floor, dtype=int)
        if not free.any():
            # all-zero variances: spread the rest evenly
            share = np.full(n, remaining / n) + floor
            base = np.floor(share).astype(int)
            order = np.argsort(-(share - base), kind="stable")
            base[order[: budget - base.sum()]] += 1
            return base
        share = remaining * sd[free] / sd[free].sum()
        if (share < floor).any() and free.sum() > 1:
            idx = np.flatnonzero(free)[share < floor]
            fixed[idx] = True
            continue
        base = np.floor(share).astype(int)
        order = np.argsort(-(share - base), kind="stable")
        base[order[: remaining - base.sum()]] += 1
        alloc[free] = base
        return alloc


@dataclass
class EstimateReport:
    psi_tilde: np.ndarray
    log_lambda_hat_chain: float
    log_lambda_hat_product: float
    sigma2_pm: np.ndarray
    stderr: np.ndarray
    allocation: np.ndarray = field(default=None)


def estimate_report(model, segments, boundaries, psi, budget=None, forms=("chain", "product")) -> EstimateReport:
    """All join estimates for one replicate; likelihoods include the emission constant.

    A likelihood form left out of ``forms`` is reported as NaN.
    """
    join = SegmentJoin(segments, boundaries, psi)
    psi_tilde = join.estimates()
    sigma2 = join.variance_terms(psi_tilde)
    ks = np.array([seg.n_particles for seg in segments], dtype=float)
    stderr = np.sqrt(np.sum(sigma2 / ks[:, None], axis=0))
    n_obs = sum(seg.n_stages for seg in segments)
    const = sum(model.weight_log_constant(t) for t in range(1, n_obs + 1))
    chain = log_mean_weight_total(segments) + join.log_chain_sum - float(np.sum(np.log(ks))) + const
    if "chain" not in forms:
        chain = np.nan
    product = likelihood_estimate(segments, boundaries, "product") + const if "product" in forms else np.nan
    if budget is None:
        budget = int(ks.sum())
    allocation = allocate_particles(sigma2.sum(axis=1), budget) if budget >= 2 * len(segments) else None
    return EstimateReport(psi_tilde, chain, product, sigma2, stderr, allocation)
