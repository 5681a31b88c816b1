"""Command-line entry point: ``segmented-pf <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import experiments as ex
from ._errors import SegmentedFilterError

SUBCOMMANDS = ("table1", "replicates", "calibrate-variance", "stability-sweep", "subsample-sweep")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat YAML file of experiment settings")
    common.add_argument("--seed", type=int, help="master seed (non-negative)")
    common.add_argument("--out", help="CSV output path (stdout when omitted)")
    common.add_argument("--workers", type=int, help="threads per replicate for segment filters")
    common.add_argument("--estimator", choices=("chain", "product", "both"))
    common.add_argument("--frozen-y", action="store_true", default=None, help="reuse one observation sequence")
    common.add_argument("--replicates", type=int)
    common.add_argument("--particles", type=int, dest="K")
    common.add_argument("--segments", type=int, dest="M")
    common.add_argument("--length", type=int, dest="U")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="segmented-pf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("table1", parents=[common], help="MSE table for the three smoothing methods")
    rep = sub.add_parser("replicates", parents=[common], help="per-replicate estimates against the oracle")
    rep.add_argument("--subsample", action="store_true", default=None, help="add the subsampled likelihood (M=2)")
    rep.add_argument("--subsample-exponent", type=float, dest="subsample_exponent")
    sub.add_parser("calibrate-variance", parents=[common], help="in-sample vs empirical variance, frozen Y")
    sw = sub.add_parser("stability-sweep", parents=[common], help="MSE at u=5 as U grows")
    sw.add_argument("--lengths", type=int, nargs="+", default=[50, 100, 200])
    sw.add_argument("--u", type=int, default=5)
    ss = sub.add_parser("subsample-sweep", parents=[common], help="subsampled likelihood variance against V")
    ss.add_argument("--exponents", type=float, nargs="+", default=[1.0, 1.5, 2.0])
    ss.add_argument("--inner", type=int, default=200)
    return parser


def _emit(rows, out):
    if out:
        path = ex.write_csv(rows, out)
        print(f"wrote {len(rows)} rows to {path}", file=sys.stderr)
        return
    header = list(rows[0])
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([ex._fmt(row.get(k, "")) for k in header])


def _summary_path(out):
    p = Path(out)
    return p.with_name(p.stem + "_summary" + (p.suffix or ".csv"))


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    overrides = {
        k: getattr(args, k, None)
        for k in (
            "seed",
            "out",
            "workers",
            "estimator",
            "frozen_y",
            "replicates",
            "K",
            "M",
            "U",
            "subsample",
            "subsample_exponent",
        )
    }
    try:
        cfg = ex.load_config(args.config, **overrides)
        if args.command == "table1":
            rows = ex.run_table1(cfg)
        elif args.command == "replicates":
            rows = ex.run_replicates(cfg)
            if cfg.out:
                ex.write_csv(ex.summarize_replicates(rows, cfg.u_list), _summary_path(cfg.out))
        elif args.command == "calibrate-variance":
            rows = ex.calibrate_variance(cfg)
        elif args.command == "stability-sweep":
            rows = ex.stability_sweep(cfg, lengths=tuple(args.lengths), u=args.u)
        else:
            rows = ex.subsample_sweep(cfg, exponents=tuple(args.exponents), n_inner=args.inner)
        _emit(rows, cfg.out)
    except (ValueError, TypeError, OSError, SegmentedFilterError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
