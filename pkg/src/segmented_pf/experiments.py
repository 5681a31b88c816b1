"""Replicate harness for the linear-Gaussian experiments.

Every random draw comes from a stream keyed by the master seed, the
replicate index and a purpose tag, so results are reproducible and do
not depend on how many workers run the segments.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .estimator import run_segments
from .filter import stream_rng
from .hmm import LinearGaussianHMM, ModelParams, simulate_hmm
from .join import estimate_report
from .kalman import kalman_filter, rts_smoother
from .subsample import PairSampler, subsampled_likelihood

log = logging.getLogger(__name__)

METHODS = {
    "standard": dict(segmented=False, initializer="prior"),
    "segmented-prior": dict(segmented=True, initializer="prior"),
    "segmented-window": dict(segmented=True, initializer="window"),
}


@dataclass
class ExperimentConfig:
    a: float = 0.8
    sigma_x2: float = 1.0
    sigma_y2: float = 1.0
    U: int = 50
    M: int = 5
    K: int | list = 500
    replicates: int = 100
    initializer: str = "prior"
    window: int = 4
    u_list: list | None = None
    seed: int = 0
    out: str | None = None
    workers: int = 1
    estimator: str = "both"
    frozen_y: bool = False
    subsample: bool = False
    subsample_exponent: float = 1.0
    subsample_kind: str = "uniform"
    budget: int | None = None

    def __post_init__(self):
        if self.u_list is None:
            self.u_list = sorted(set(range(5, self.U + 1, 5)) | {self.U})
        self.validate()

    def validate(self):
        ModelParams(self.a, self.sigma_x2, self.sigma_y2)
        if self.U < 1 or self.M < 1 or self.U % self.M:
            raise ValueError(f"U={self.U} must be a positive multiple of M={self.M}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        bad = [u for u in self.u_list if not 1 <= u <= self.U]
        if bad:
            raise ValueError(f"u_list entries outside 1..{self.U}: {bad}")
        if self.estimator not in ("chain", "product", "both"):
            raise ValueError(f"estimator must be chain, product or both, got {self.estimator!r}")
        if self.initializer not in ("prior", "window", "predictor"):
            raise ValueError(f"unknown initializer {self.initializer!r}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def T(self):
        return self.U // self.M

    @property
    def params(self):
        return ModelParams(self.a, self.sigma_x2, self.sigma_y2)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Read a flat YAML mapping of :class:`ExperimentConfig` fields, then apply overrides."""
    values = {}
    if path is not None:
        try:
            with open(path) as fh:
                values = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
        if not isinstance(values, dict):
            raise ValueError(f"config {path} must be a key-value mapping")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def observations_for(cfg: ExperimentConfig, replicate: int):
    """Latent path and observations for a replicate (shared by all replicates in frozen-Y mode)."""
    key = 0 if cfg.frozen_y else replicate
    return simulate_hmm(cfg.params, cfg.U, stream_rng(cfg.seed, key, purpose="simulate"))


def _oracle(cfg, y):
    ks = kalman_filter(cfg.params, y)
    return ks.log_likelihood, rts_smoother(cfg.params, ks).mean


def run_replicate(cfg: ExperimentConfig, replicate: int, method="segmented-prior") -> dict:
    """One replicate: simulate, filter, join, and compare with the Kalman oracle."""
    setup = METHODS.get(method) or dict(segmented=True, initializer=cfg.initializer)
    n_seg = cfg.M if setup["segmented"] else 1
    model = LinearGaussianHMM(cfg.params)
    _, y = observations_for(cfg, replicate)
    log_lik, smooth = _oracle(cfg, y)
    segments, boundaries = run_segments(
        model,
        y,
        n_seg,
        cfg.K,
        initializer=setup["initializer"],
        seed=cfg.seed,
        replicate=replicate,
        window=cfg.window,
        workers=cfg.workers,
    )
    forms = ("chain", "product") if cfg.estimator == "both" else (cfg.estimator,)
    report = estimate_report(model, segments, boundaries, list(cfg.u_list), budget=cfg.budget, forms=forms)

    row = {"replicate": replicate, "method": method, "log_lambda_oracle": log_lik}
    if cfg.estimator in ("chain", "both"):
        row["log_lambda_chain"] = report.log_lambda_hat_chain
        row["lambda_ratio_chain"] = math.exp(report.log_lambda_hat_chain - log_lik)
    if cfg.estimator in ("product", "both"):
        row["log_lambda_product"] = report.log_lambda_hat_product
        row["lambda_ratio_product"] = math.exp(report.log_lambda_hat_product - log_lik)
    if cfg.subsample and n_seg == 2:
        sampler = PairSampler(kind=cfg.subsample_kind, exponent=cfg.subsample_exponent)
        sub = subsampled_likelihood(
            model, segments[0], segments[1], sampler, stream_rng(cfg.seed, replicate, purpose="subsample")
        )
        row["log_lambda_subsample"] = sub.log_lambda + cfg.U * model.weight_log_constant()
    for i, u in enumerate(cfg.u_list):
        row[f"psi_u{u}"] = report.psi_tilde[i]
        row[f"oracle_u{u}"] = smooth[u - 1]
        row[f"stderr_u{u}"] = report.stderr[i]
        for m in range(n_seg):
            row[f"sigma2_p{m + 1}_u{u}"] = report.sigma2_pm[m, i]
    if report.allocation is not None:
        for m, k in enumerate(report.allocation):
            row[f"alloc_m{m + 1}"] = int(k)
    return row


def run_replicates(cfg: ExperimentConfig, method=None) -> list[dict]:
    method = method or "custom"
    rows = []
    for r in range(cfg.replicates):
        rows.append(run_replicate(cfg, r, method))
        if (r + 1) % 100 == 0:
            log.info("%s: %d/%d replicates", method, r + 1, cfg.replicates)
    return rows


def _fmt(value):
    if isinstance(value, float) or isinstance(value, np.floating):
        return format(float(value), ".17g")
    return str(value)


def write_csv(rows, path):
    """Write dict rows with a header; floats carry 17 significant digits."""
    if not rows:
        raise ValueError("no rows to write")
    header = list(rows[0])
    for row in rows[1:]:
        header.extend(k for k in row if k not in header)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(row[k]) if k in row else "" for k in header])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def summarize_replicates(rows, u_list) -> list[dict]:
    """Per-u mean estimate, MSE, mean in-sample stderr and cross-replicate spread."""
    out = []
    for u in u_list:
        est = np.array([r[f"psi_u{u}"] for r in rows])
        ora = np.array([r[f"oracle_u{u}"] for r in rows])
        se = np.array([r[f"stderr_u{u}"] for r in rows])
        err2 = (est - ora) ** 2
        out.append(
            {
                "u": u,
                "mean_estimate": float(est.mean()),
                "mse": float(err2.mean()),
                "mse_stderr": float(err2.std(ddof=1) / math.sqrt(len(rows))) if len(rows) > 1 else math.nan,
                "mean_insample_stderr": float(se.mean()),
                "empirical_stderr": float(est.std(ddof=1)) if len(rows) > 1 else math.nan,
            }
        )
    for form in ("chain", "product"):
        key = f"lambda_ratio_{form}"
        if key in rows[0]:
            vals = np.array([r[key] for r in rows])
            out.append(
                {
                    "u": f"lambda_ratio_{form}",
                    "mean_estimate": float(vals.mean()),
                    "mse": math.nan,
                    "mse_stderr": math.nan,
                    "mean_insample_stderr": math.nan,
                    "empirical_stderr": float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.nan,
                }
            )
    return out


def run_table1(cfg: ExperimentConfig, methods=tuple(METHODS)) -> list[dict]:
    """MSE (x 1e-2) of the smoothed-mean estimates for each method and each ``u``.

    Each replicate draws fresh observations unless ``cfg.frozen_y``.
    """
    sq = {m: [] for m in methods}
    for r in range(cfg.replicates):
        for method in methods:
            row = run_replicate(cfg.replace(estimator="chain", subsample=False), r, method)
            sq[method].append([(row[f"psi_u{u}"] - row[f"oracle_u{u}"]) ** 2 for u in cfg.u_list])
    table = []
    for i, u in enumerate(cfg.u_list):
        entry = {"u": u}
        for method in methods:
            e = np.array(sq[method])[:, i] * 100.0
            entry[f"{method}_mse"] = float(e.mean())
            entry[f"{method}_stderr"] = float(e.std(ddof=1) / math.sqrt(e.size)) if e.size > 1 else math.nan
        table.append(entry)
    return table


def stability_sweep(cfg: ExperimentConfig, lengths=(50, 100, 200), u=5, block=10) -> list[dict]:
    """MSE at a fixed early ``u`` as the sequence grows; segmented runs use ``M = U / block``."""
    out = []
    for n in lengths:
        sub = cfg.replace(U=n, M=n // block, u_list=[u])
        entry = {"U": n, "M": n // block}
        for method in ("standard", "segmented-prior"):
            errs = []
            for r in range(sub.replicates):
                row = run_replicate(sub.replace(estimator="chain"), r, method)
                errs.append((row[f"psi_u{u}"] - row[f"oracle_u{u}"]) ** 2)
            errs = np.array(errs)
            entry[f"{method}_mse"] = float(errs.mean())
            entry[f"{method}_stderr"] = float(errs.std(ddof=1) / math.sqrt(errs.size)) if errs.size > 1 else math.nan
        out.append(entry)
    return out


def calibrate_variance(cfg: ExperimentConfig) -> list[dict]:
    """Compare in-sample variance estimates with the cross-replicate variance (frozen observations)."""
    sub = cfg.replace(frozen_y=True, estimator="chain")
    rows = run_replicates(sub, method="custom")
    out = []
    for u in sub.u_list:
        est = np.array([r[f"psi_u{u}"] for r in rows])
        var_in = np.array([r[f"stderr_u{u}"] ** 2 for r in rows])
        z = (est - rows[0][f"oracle_u{u}"]) / np.sqrt(var_in)
        zc = z - z.mean()
        emp = float(est.var(ddof=1)) if est.size > 1 else math.nan
        out.append(
            {
                "u": u,
                "median_insample_var": float(np.median(var_in)),
                "empirical_var": emp,
                "ratio": float(np.median(var_in)) / emp if emp else math.nan,
                "z_skewness": float(np.mean(zc**3) / np.mean(zc**2) ** 1.5),
                "z_excess_kurtosis": float(np.mean(zc**4) / np.mean(zc**2) ** 2 - 3.0),
            }
        )
    return out


def subsample_sweep(cfg: ExperimentConfig, exponents=(1.0, 1.5, 2.0), n_inner=200) -> list[dict]:
    """Variance of the subsampled log-likelihood against the number of pair draws.

    For each of ``cfg.replicates`` two-segment filter runs, the subsampled
    estimate is redrawn ``n_inner`` times per ``V``; reported is the median
    over runs of the within-run variance.
    """
    sub = cfg.replace(M=2)
    model = LinearGaussianHMM(sub.params)
    K = sub.K if isinstance(sub.K, int) else int(sub.K[0])
    per_run = {s: [] for s in exponents}
    for r in range(sub.replicates):
        _, y = observations_for(sub, r)
        segments, boundaries = run_segments(
            model, y, 2, K, initializer=sub.initializer, seed=sub.seed, replicate=r, window=sub.window
        )
        for s in exponents:
            sampler = PairSampler(kind=sub.subsample_kind, exponent=s)
            rng = stream_rng(sub.seed, r, int(round(100 * s)), purpose="subsample")
            vals = [subsampled_likelihood(model, segments[0], segments[1], sampler, rng).log_lambda for _ in range(n_inner)]
            per_run[s].append(float(np.var(vals, ddof=1)))
    return [
        {
            "exponent": s,
            "V": PairSampler(exponent=s).draws_for(K),
            "median_var_log_lambda": float(np.median(per_run[s])),
            "mean_var_log_lambda": float(np.mean(per_run[s])),
        }
        for s in exponents
    ]
