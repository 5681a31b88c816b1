"""Exact scalar Kalman filter and Rauch-Tung-Striebel smoother.

Ground truth for the linear-Gaussian model: filtered/predictive moments,
the exact log-likelihood and smoothed means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hmm import LOG_2PI, ModelParams


@dataclass(frozen=True)
class KalmanState:
    pred_mean: np.ndarray
    pred_var: np.ndarray
    filt_mean: np.ndarray
    filt_var: np.ndarray
    log_likelihood: float
    log_likelihood_increments: np.ndarray


@dataclass(frozen=True)
class SmootherState:
    mean: np.ndarray
    var: np.ndarray


def kalman_filter(params: ModelParams, observations, init_mean=0.0, init_var=None) -> KalmanState:
    """Run the scalar Kalman recursion.

    The default start is the stationary law ``N(0, sigma_x2)`` for ``X_1``;
    ``init_mean``/``init_var`` override it (used for window-restricted runs).
    """
    y = np.asarray(observations, dtype=float).ravel()
    if y.size < 1:
        raise ValueError("need at least one observation")
    a, q, r = params.a, params.innovation_var, params.sigma_y2
    n = y.size
    pm, pv, fm, fv, ll = (np.empty(n) for _ in range(5))
    m, v = float(init_mean), float(params.sigma_x2 if init_var is None else init_var)
    for t in range(n):
        if t > 0:
            m, v = a * m, a * a * v + q
        pm[t], pv[t] = m, v
        s = v + r
        ll[t] = -0.5 * (LOG_2PI + np.log(s) + (y[t] - m) ** 2 / s)
        gain = v / s
        m = m + gain * (y[t] - m)
        v = (1.0 - gain) * v
        fm[t], fv[t] = m, v
    return KalmanState(pm, pv, fm, fv, float(np.sum(ll)), ll)


def rts_smoother(params: ModelParams, state: KalmanState) -> SmootherState:
    a = params.a
    n = state.filt_mean.size
    sm = state.filt_mean.copy()
    sv = state.filt_var.copy()
    for t in range(n - 2, -1, -1):
        gain = state.filt_var[t] * a / state.pred_var[t + 1]
        sm[t] = state.filt_mean[t] + gain * (sm[t + 1] - state.pred_mean[t + 1])
        sv[t] = state.filt_var[t] + gain * gain * (sv[t + 1] - state.pred_var[t + 1])
    return SmootherState(sm, sv)


def predictive_moments(params: ModelParams, window) -> tuple[float, float]:
    """Mean and variance of the state one step after ``window``, given only ``window``.

    The window's first state is taken to be stationary.
    """
    ks = kalman_filter(params, window)
    a = params.a
    return a * ks.filt_mean[-1], a * a * ks.filt_var[-1] + params.innovation_var
