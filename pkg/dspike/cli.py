#!/usr/bin/env python3
"""Command line interface for the *dspike* package.

The heavy lifting lives in :mod:`dspike.simulate`, :mod:`dspike.combine`
and :mod:`dspike.validation`; this module only parses arguments, prints
progress and writes the requested files.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from . import __version__, helpers
from .combine import RollingEvalSpec, reweight_ensemble, reweight_splits, rolling_forecast_eval
from .core import DoubleSpikePrior, DspikeError, HyperGridSpec
from .sampler import BalanceMode, InitMode, SamplerConfig, run_chain
from .simulate import ALL_METHODS, ScenarioSpec, StudyGrid, build_cells, load_grid_file, run_replication_study
from .summaries import selection_counts, summarize_posterior, write_summary_csv
from .validation import validate_all

logger = logging.getLogger(__name__)


def _banner(title: str) -> None:
    print("=" * 80)
    print(title)
    print("=" * 80)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.replace(";", ",").split(",") if p.strip())


def _method_list(text: str) -> tuple[str, ...]:
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    unknown = [m for m in methods if m not in ALL_METHODS]
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown methods: {', '.join(unknown)}")
    return methods


def _parse_bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


def _config_defaults(sub: argparse.ArgumentParser, path: str) -> dict:
    """Read a key=value file whose keys are the long flags of ``sub``."""
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    raw = helpers.read_key_value_file(path, actions)
    values = {}
    for key, text in raw.items():
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            values[key] = _parse_bool(text)
        elif action.type is not None:
            values[key] = action.type(text)
        else:
            values[key] = text
    return values


def _add_chain_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--balance", type=str, choices=[m.value for m in BalanceMode],
                   default=BalanceMode.PAPER_EXACT.value)
    p.add_argument("--init", type=str, choices=[m.value for m in InitMode], default=InitMode.FULL.value,
                   help="Starting inclusion vector: all active (full) or a prior draw")


def _require(parser: argparse.ArgumentParser, args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        parser.error(f"missing required option(s): {', '.join(missing)}")


# ==========================================================================
# Subcommands
# ==========================================================================


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = ScenarioSpec(id=args.scenario, seed=args.seed)
    grid = load_grid_file(args.grid_file) if args.grid_file else StudyGrid()
    cells = build_cells(args.methods, scenario.K, grid)

    _banner(f"SIMULATION STUDY: scenario {scenario.id}")
    print(f"  n={scenario.n} K={scenario.K} s={scenario.s}; {len(cells)} cells x {args.reps} replications")
    report = run_replication_study(scenario, cells, args.reps, args.niter, args.burn_in,
                                   args.seed, grid.a1, grid.a2, n_jobs=args.jobs,
                                   positive_only=grid.lasso_positive_only, init_mode=grid.init_mode)
    out, records = report.write(args.out)

    print("\nBest cell per method (mean l1 error):")
    for method in args.methods:
        try:
            best = report.best(method)
        except KeyError:
            print(f"  {method:7s} all cells failed")
            continue
        print(f"  {method:7s} {best['mean_error']:.4f} (se {best['mc_se']:.4f})  {best['params']}")
    failed = int(report.rows["n_failed"].sum())
    if failed:
        print(f"\n  {failed} cell evaluations failed; see {records}")
    print(f"\nReport written to {out}")
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    data = helpers.ingest_csv(args.data, args.target)
    K = data.K
    prior = DoubleSpikePrior(
        rho1=args.rho1 if args.rho1 is not None else float(K) ** 1.5,
        rho2=args.rho2 if args.rho2 is not None else 1.0 / K,
        theta=args.theta if args.theta is not None else 1.0 / K,
    )
    config = SamplerConfig(prior, args.niter, args.burn_in, BalanceMode(args.balance), seed=args.seed,
                           init_mode=InitMode(args.init))

    _banner("ADSS FIT")
    print(f"  {args.data}: n={data.n} K={K}")
    print(f"  rho1={prior.rho1:.6g} rho2={prior.rho2:.6g} theta={prior.theta:.6g}")
    trace = run_chain(config, data)
    summary = summarize_posterior(trace, args.burn_in, args.level)
    sizes = trace.active_set_sizes(args.burn_in)
    print(f"  acceptance rate: {trace.acceptance_rate(args.burn_in):.3f}")
    print(f"  active set size: {int(sizes.min())}..{int(sizes.max())}")
    print(f"  credible radius (l1, level {args.level:g}): {summary.credible_radius_l1:.4f}")
    counts = selection_counts(summary.inclusion_freq)
    print("  selection: " + ", ".join(f"{k}={v}" for k, v in counts.items()))

    if args.trace_out:
        trace.write_csv(args.trace_out)
        print(f"\nTrace written to {args.trace_out}")
    if args.summary_out:
        write_summary_csv(summary, args.summary_out)
        print(f"Summary written to {args.summary_out}")
    return 0


def cmd_combine(args: argparse.Namespace) -> int:
    data = helpers.ingest_csv(args.data, args.target)
    grid = HyperGridSpec.rolling_default() if args.grid == "rolling" else HyperGridSpec.scenario_default()
    spec = RollingEvalSpec(
        start_period=args.start_period,
        method=args.method,
        grid=grid,
        theta=args.theta,
        niter=args.niter,
        burn_in=args.burn_in,
        seed=args.seed,
        exclude_periods=args.exclude_periods,
        n_jobs=args.jobs,
    )
    _banner(f"ROLLING COMBINATION: {spec.method}")
    print(f"  {args.data}: {data.n} periods, {data.K} forecasters; {len(spec.cells(data.K))} grid cells")
    result = rolling_forecast_eval(data, spec)
    result.write_csv(args.out)
    print(f"  RMSE: {result.rmse:.4f}")
    if spec.exclude_periods:
        print(f"  RMSE excluding periods {list(spec.exclude_periods)}: {result.rmse_excluding:.4f}")
    print(f"\nForecasts written to {args.out}")
    return 0


def _print_diagnostics(diagnostics) -> None:
    for label, diag in diagnostics.items():
        corr = diag.mean_pairwise_bias_correlation
        print(f"  {label:17s} mean |bias| {abs(diag.per_column_bias).mean():.4f}  "
              f"mean var {diag.per_column_variance.mean():.4f}  "
              f"mean corr {'n/a' if corr is None else f'{corr:.4f}'}")


def cmd_reweight(args: argparse.Namespace) -> int:
    if args.data is None and (args.train is None or args.holdout is None):
        raise ValueError("reweight needs --train and --holdout, or --data for random splits")
    if args.data is not None:
        data = helpers.ingest_csv(args.data, args.target)
        train = holdout = None
        K = data.K
    else:
        train = helpers.ingest_csv(args.train, args.target)
        holdout = helpers.ingest_csv(args.holdout, args.target)
        K = train.K
    prior = DoubleSpikePrior(
        rho1=args.rho1 if args.rho1 is not None else float(K) ** 1.5,
        rho2=args.rho2 if args.rho2 is not None else 1.0 / K,
        theta=args.theta,
    )
    config = SamplerConfig(prior, args.niter, args.burn_in, BalanceMode(args.balance), seed=args.seed,
                           init_mode=InitMode(args.init))

    _banner("ENSEMBLE REWEIGHTING")
    if train is None:
        print(f"  {args.data}: n={data.n} K={K}; {args.reps} random splits, "
              f"train fraction {args.train_fraction:g}")
        study = reweight_splits(data, config, args.reps, args.train_fraction, args.seed,
                                args.threshold, n_jobs=args.jobs)
        print(f"  mean holdout RMSE: {study.mean('holdout_rmse'):.4f} "
              f"(equal weights {study.mean('equal_weight_rmse'):.4f})")
        print(f"  mean RMSE difference (equal - reweighted): {study.mean_difference:.4f}; "
              f"reweighting wins {study.wins} of {study.n_reps}")
        print(f"  mean best-group average RMSE: {study.mean('best_group_rmse'):.4f}")
        study.write_csv(args.out)
        print(f"\nSplits written to {args.out}")
        return 0

    print(f"  train n={train.n}, holdout n={holdout.n}, K={K}")
    result = reweight_ensemble(train, holdout, config, args.threshold)
    print(f"  holdout RMSE: {result.holdout_rmse:.4f} (equal weights {result.equal_weight_rmse:.4f})")
    print(f"  best-group average RMSE: {result.best_group_rmse:.4f}")
    print(f"  active set size: {result.active_set_range[0]}..{result.active_set_range[1]}")
    print("  selection: " + ", ".join(f"{k}={v}" for k, v in result.counts.items()))
    _print_diagnostics(result.diagnostics)

    helpers.write_frame(result.weights_frame(train.columns), args.out)
    print(f"\nWeights written to {args.out}")
    if args.diagnostics_out:
        helpers.write_frame(result.diagnostics_frame(), args.diagnostics_out)
        print(f"Diagnostics written to {args.diagnostics_out}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    _banner("VERIFY")
    ok = validate_all(quick=args.quick, seed=args.seed)
    print("\nALL CHECKS PASSED" if ok else "\nSOME CHECKS FAILED")
    return 0 if ok else 1


# ==========================================================================
# Main Entry Point
# ==========================================================================


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="dspike",
        description="Double spike Dirichlet priors for simplex-constrained forecast weights",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s simulate --scenario 1 --reps 20 --out report.csv
  %(prog)s fit --data panel.csv --target y --trace-out trace.csv --summary-out summary.csv
  %(prog)s combine --data spf.csv --target y --method ds --start-period 2 --out forecasts.csv
  %(prog)s reweight --train train.csv --holdout test.csv --target y --out weights.csv
  %(prog)s reweight --data panel.csv --reps 100 --jobs 4 --out splits.csv
  %(prog)s verify --quick
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="Log progress (-v for INFO, -vv for DEBUG)")
    subs = parser.add_subparsers(dest="command", required=True)
    sub: dict[str, argparse.ArgumentParser] = {}

    p = sub["simulate"] = subs.add_parser("simulate", help="Run a replication study on a simulation scenario")
    p.add_argument("--scenario", type=int, choices=[1, 2], default=1)
    p.add_argument("--reps", type=int, default=20, help="Number of replications")
    p.add_argument("--niter", type=int, default=20000)
    p.add_argument("--burn-in", type=int, default=15000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, default=None, help="Report CSV (records go to <stem>.records.csv)")
    p.add_argument("--grid-file", type=str, default=None, help="key=value file with grid settings")
    p.add_argument("--methods", type=_method_list, default=ALL_METHODS,
                   help=f"Comma separated subset of {','.join(ALL_METHODS)}")
    p.add_argument("--jobs", type=int, default=1, help="Worker processes")

    p = sub["fit"] = subs.add_parser("fit", help="Run the ADSS sampler on a panel")
    p.add_argument("--data", type=str, default=None)
    p.add_argument("--target", type=str, default="y")
    p.add_argument("--rho1", type=float, default=None, help="Default K**1.5")
    p.add_argument("--rho2", type=float, default=None, help="Default 1/K")
    p.add_argument("--theta", type=float, default=None, help="Default 1/K")
    p.add_argument("--niter", type=int, default=20000)
    p.add_argument("--burn-in", type=int, default=15000)
    p.add_argument("--seed", type=int, default=0)
    _add_chain_options(p)
    p.add_argument("--level", type=float, default=0.95, help="Credible ball level")
    p.add_argument("--trace-out", type=str, default=None)
    p.add_argument("--summary-out", type=str, default=None)

    p = sub["combine"] = subs.add_parser("combine", help="Rolling out-of-sample forecast combination")
    p.add_argument("--data", type=str, default=None)
    p.add_argument("--target", type=str, default="y")
    p.add_argument("--method", type=str, choices=list(ALL_METHODS), default="ds")
    p.add_argument("--start-period", type=int, default=2)
    p.add_argument("--exclude-periods", type=_int_list, default=(),
                   help="Comma separated periods left out of the second RMSE")
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--grid", type=str, choices=["scenario", "rolling"], default="rolling")
    p.add_argument("--niter", type=int, default=2000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--theta", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)

    p = sub["reweight"] = subs.add_parser("reweight", help="Reweight an ensemble and score it on a holdout set")
    p.add_argument("--train", type=str, default=None)
    p.add_argument("--holdout", type=str, default=None)
    p.add_argument("--data", type=str, default=None, help="Single panel to split at random (instead of --train/--holdout)")
    p.add_argument("--reps", type=int, default=100, help="Random splits of --data")
    p.add_argument("--train-fraction", type=float, default=0.5)
    p.add_argument("--target", type=str, default="y")
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--diagnostics-out", type=str, default=None)
    p.add_argument("--rho1", type=float, default=None, help="Default K**1.5")
    p.add_argument("--rho2", type=float, default=None, help="Default 1/K")
    p.add_argument("--theta", type=float, default=0.2)
    p.add_argument("--niter", type=int, default=30000)
    p.add_argument("--burn-in", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.2, help="Inclusion frequency for the selected group")
    p.add_argument("--jobs", type=int, default=1, help="Worker processes for --data splits")
    _add_chain_options(p)

    p = sub["verify"] = subs.add_parser("verify", help="Run the Monte Carlo and oracle self-checks")
    p.add_argument("--quick", action="store_true", help="Reduced Monte Carlo sizes")
    p.add_argument("--seed", type=int, default=0)

    for p in sub.values():
        p.add_argument("--config", type=str, default=None,
                       help="key=value file; keys are long option names")
    return parser, sub


REQUIRED = {
    "simulate": ("out",),
    "fit": ("data",),
    "combine": ("data", "out"),
    "reweight": ("out",),
    "verify": (),
}

COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "combine": cmd_combine,
    "reweight": cmd_reweight,
    "verify": cmd_verify,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse command-line arguments and dispatch to the appropriate subcommand."""
    parser, sub = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)

    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)

    try:
        if args.config:
            # flags given on the command line still win over the file
            sub[args.command].set_defaults(**_config_defaults(sub[args.command], args.config))
            args = parser.parse_args(argv)
        _require(sub[args.command], args, *REQUIRED[args.command])
        return COMMANDS[args.command](args)
    except (DspikeError, ValueError, OSError, argparse.ArgumentTypeError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
