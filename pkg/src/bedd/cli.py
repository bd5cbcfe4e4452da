"""Command line interface.

    bedd run --preset {a|b|c} [--seeds N] [--seed S] [--config PATH]
             [--out DIR] [--set key=value ...]
    bedd metrics --in DIR
    bedd plot --in DIR --out FILE [--agent N]

The default output directory comes from $BEDD_OUT_DIR (falling back to
./bedd_out).  The exit code of ``run`` is nonzero iff any solver divergence
occurred during the sweep.
"""

from __future__ import annotations

import argparse
import os
import sys

from .experiments import run_experiment
from .metrics import metrics_from_csv_dir
from .scenario import ConfigError


def _parse_overrides(pairs):
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _cmd_run(args) -> int:
    out_dir = args.out or os.environ.get("BEDD_OUT_DIR", "bedd_out")
    outcomes = run_experiment(
        preset=args.preset,
        config_path=args.config,
        overrides=_parse_overrides(args.set),
        seeds=args.seeds,
        base_seed=args.seed,
        out_dir=out_dir,
        make_plots=not args.no_plots,
    )
    divergences = 0
    for o in outcomes:
        divergences += o.report.divergences
        print(
            f"seed {o.seed}: mean ATE {o.report.mean_ate():.3f} m, "
            f"mean relative error {o.report.mean_relative_error():.3f} m, "
            f"smoothed relative error {o.report.mean_smoothed_relative_error():.3f} m, "
            f"{o.report.deliveries} deliveries, "
            f"{o.report.outliers_injected} outliers, "
            f"{o.report.divergences} divergences"
        )
    print(f"outputs in {out_dir}")
    return 1 if divergences else 0


def _cmd_metrics(args) -> int:
    report = metrics_from_csv_dir(args.in_dir)
    for r in sorted(report.ate_rmse):
        print(
            f"robot {r}: ATE {report.ate_rmse[r]:.4f} m, "
            f"final error {report.final_error[r]:.4f} m, "
            f"relative error {report.relative_error[r]:.4f} m"
        )
    return 0


def _cmd_plot(args) -> int:
    from .plots import plot_run

    path = plot_run(args.in_dir, args.out, agent=args.agent)
    print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bedd", description="cooperative AUV localization experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment preset or scenario file")
    p_run.add_argument("--preset", choices=("a", "b", "c"))
    p_run.add_argument("--config", help="scenario file path")
    p_run.add_argument("--seeds", type=int, default=1, help="number of seeds")
    p_run.add_argument("--seed", type=int, default=0, help="first seed")
    p_run.add_argument("--out", help="output directory (default $BEDD_OUT_DIR)")
    p_run.add_argument(
        "--set", action="append", metavar="KEY=VALUE", help="override a scenario key"
    )
    p_run.add_argument("--no-plots", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_metrics = sub.add_parser("metrics", help="recompute metrics from CSVs")
    p_metrics.add_argument("--in", dest="in_dir", required=True)
    p_metrics.set_defaults(func=_cmd_metrics)

    p_plot = sub.add_parser("plot", help="plot trajectories from CSVs")
    p_plot.add_argument("--in", dest="in_dir", required=True)
    p_plot.add_argument("--out", required=True)
    p_plot.add_argument("--agent", type=int, default=0)
    p_plot.set_defaults(func=_cmd_plot)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
