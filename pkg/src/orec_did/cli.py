# Copyright (c) 2025 Nicola Spallanzani
# Licensed under the MIT License. See LICENSE file for details.

import sys
import logging
import argparse
from pathlib import Path

from . import __version__
from .baseline import pt_baseline_att
from .config import check_parameters, copy_config_template, load_config
from .diagnostics import PLACEBO_FAMILIES, overlap_diagnostic, placebo_orec_test
from .errors import EXIT_OK, OrecError, ParseError
from .estimator import estimate_att
from .kernel import default_kernel
from .log import DEFAULT_LOGFILE, setup_logging
from .montecarlo import ESTIMATORS, monte_carlo_study, write_mc_csv
from .panel import read_panel_csv, validate_dataset, write_panel_csv
from .quantile import estimate_qtts
from .report import RunReport, att_block, collect_warnings, overlap_block, placebo_block, qtt_block
from .simulation import DGP_PRESETS, dgp_spec, simulate

# command-line flag -> [parameters] key
OVERRIDES = {
    'folds': 'k_folds',
    'reps': 'repetitions_s',
    'cf_reps': 'repetitions_s',
    'bootstrap': 'bootstrap_b',
    'alpha': 'alpha_level',
    'seed': 'seed',
    'kernel_bandwidth': 'bandwidth',
    'lambda_': 'lambda',
    'ratio_method': 'ratio_method',
}


def parse_level(value):
    try:
        level = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{value} is not a number.") from None
    if not 0.0 < level < 1.0:
        raise argparse.ArgumentTypeError(f"quantile level {value} must lie in (0, 1).")
    return level


def parse_int_list(value):
    try:
        items = [int(item) for item in value.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{value} is not a comma-separated list of integers.") from None
    if not items or any(item < 2 for item in items):
        raise argparse.ArgumentTypeError(f"{value} must list sample sizes >= 2.")
    return items


def parse_estimators(value):
    items = [item.strip() for item in value.split(",") if item.strip()]
    unknown = [item for item in items if item not in ESTIMATORS]
    if not items or unknown:
        raise argparse.ArgumentTypeError(f"estimators must be a comma-separated subset of {', '.join(ESTIMATORS)}.")
    return items


def _estimator_options(repetitions_flag):
    """Flags shared by the commands that run estimators."""
    options = argparse.ArgumentParser(add_help=False)
    options.add_argument('--folds', help='Number of cross-fitting folds', type=int, dest='folds')
    if repetitions_flag == 'reps':
        options.add_argument('--reps', help='Cross-fitting repetitions for the median adjustment',
                             type=int, dest='reps')
    else:
        options.add_argument('--cf-reps', help='Cross-fitting repetitions per Monte-Carlo draw (default 1)',
                             type=int, dest='cf_reps', default=1)
    options.add_argument('--bootstrap', help='Multiplier bootstrap draws', type=int, dest='bootstrap')
    options.add_argument('--alpha', help='Level of the confidence intervals', type=float, dest='alpha')
    options.add_argument('--kernel-bandwidth', help="'median' or a positive bandwidth", type=str,
                         dest='kernel_bandwidth')
    options.add_argument('--lambda', help="'auto', a positive penalty, or a comma-separated grid for CV",
                         type=str, dest='lambda_')
    options.add_argument('--ratio-method', help='Density ratio estimator', choices=['kl', 'lsif'],
                         dest='ratio_method')
    return options


def _common_options():
    options = argparse.ArgumentParser(add_help=False)
    options.add_argument('--seed', help='Master seed (default: $OREC_DID_SEED, then config.toml)',
                         type=int, dest='seed')
    options.add_argument('-o', '--out', help='Output file (default: stdout)', type=str, dest='out')
    options.add_argument('--raw', help='Full precision floats instead of 6 significant digits',
                         dest='raw', action='store_true')
    return options


def build_parser():
    parser = argparse.ArgumentParser(prog='orec-did',
                                     description='Difference-in-differences under odds-ratio equi-confounding: '
                                                 'ATT and QTT estimation, diagnostics and simulation studies.',
                                     epilog="Copyright (c) 2025 Nicola Spallanzani")
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    parser.add_argument('-i', '--init',
                        help='Create a config.toml file to be used as template', dest='init', action='store_true')
    parser.add_argument('-q', '--quiet',
                        help='Only log warnings and errors', dest='quiet', action='store_true')
    parser.add_argument('--logger',
                        help=f'Log file (default: none, {DEFAULT_LOGFILE} when given without a value)',
                        type=str, dest='logger', nargs='?', const=DEFAULT_LOGFILE)
    commands = parser.add_subparsers(dest='command', metavar='command')

    common = _common_options()
    estimate = commands.add_parser('estimate', parents=[common, _estimator_options('reps')],
                                   help='Estimate the ATT (and optionally quantiles) from a panel CSV')
    estimate.add_argument('csv', help="Panel CSV, '-' for stdin")
    estimate.add_argument('--qtt', help='Counterfactual quantile level, may be repeated',
                          type=parse_level, action='append', dest='qtt')
    estimate.add_argument('--estimator', help='Estimators to run', choices=['orec', 'pt', 'both'],
                          default='orec', dest='estimator')
    estimate.add_argument('--outcome', help='Outcome kind', choices=['auto', 'continuous', 'binary'],
                          default='auto', dest='outcome')

    simulate_cmd = commands.add_parser('simulate', parents=[common], help='Draw a panel CSV from a design')
    simulate_cmd.add_argument('--dgp', help=f"Design: {', '.join(DGP_PRESETS)}", required=True, dest='dgp')
    simulate_cmd.add_argument('--n', help='Number of units', type=int, required=True, dest='n')
    simulate_cmd.add_argument('--pre-periods', help='Extra pre-treatment outcome columns y_pre1..y_preT',
                              type=int, default=0, dest='pre_periods')

    diagnose = commands.add_parser('diagnose', parents=[common], help='Overlap and placebo diagnostics')
    diagnose.add_argument('csv', help="Panel CSV, '-' for stdin")
    diagnose.add_argument('--overlap', help='Overlap diagnostic (default when nothing is selected)',
                          dest='overlap', action='store_true')
    diagnose.add_argument('--placebo', help='Placebo test on the y_pre columns', dest='placebo',
                          action='store_true')
    diagnose.add_argument('--placebo-family', help='Outcome model of the placebo test',
                          choices=list(PLACEBO_FAMILIES), dest='placebo_family')
    diagnose.add_argument('--threshold', help='Density (or probability) threshold of the overlap diagnostic',
                          type=float, default=1e-3, dest='threshold')
    diagnose.add_argument('--kernel-bandwidth', help="'median' or a positive bandwidth", type=str,
                          dest='kernel_bandwidth')

    benchmark = commands.add_parser('benchmark', parents=[common, _estimator_options('cf_reps')],
                                    help='Monte-Carlo study, one CSV row per estimator and sample size')
    benchmark.add_argument('--dgp', help=f"Design: {', '.join(DGP_PRESETS)}", required=True, dest='dgp')
    benchmark.add_argument('--n-grid', help='Comma-separated sample sizes', type=parse_int_list,
                           required=True, dest='n_grid')
    benchmark.add_argument('--reps', help='Monte-Carlo repetitions', type=int, required=True, dest='mc_reps')
    benchmark.add_argument('--estimators', help=f"Comma-separated subset of {', '.join(ESTIMATORS)}",
                           type=parse_estimators, default=['orec'], dest='estimators')
    benchmark.add_argument('--quantile', help='Level of the qtt estimator', type=parse_level, default=0.5,
                           dest='quantile')
    benchmark.add_argument('--jobs', help='Parallel workers', type=int, default=1, dest='jobs')
    return parser


def set_cl_args(config, args):
    """
    Overrides the configuration parameters with the command line flags.
    """
    for flag, parameter in OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            config['parameters'][parameter] = value
            if parameter == 'seed':
                config['parameters'].pop('seed_origin', None)
    return config


def _open_input(path):
    return sys.stdin if path == "-" else Path(path)


def _load_panel(path, outcome="auto"):
    try:
        panel = read_panel_csv(_open_input(path))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror or exc}") from exc
    data = validate_dataset(panel.columns["y0"], panel.columns["y1"], panel.columns["a"], panel.x,
                            outcome_kind=None if outcome == "auto" else outcome)
    return panel, data


def _meta(config, data=None, source=None):
    meta = {"version": __version__, "seed": config.seed}
    if source is not None:
        meta["input"] = str(source)
    if data is not None:
        meta.update(n=data.n, d=data.d, outcome_kind=data.outcome_kind.value)
    meta["config"] = config.echo()
    return meta


def _write(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_estimate(args, config, logger):
    """ATT (odds-ratio and/or parallel-trends) and counterfactual quantiles of a panel CSV."""
    _, data = _load_panel(args.csv, args.outcome)
    logger.info(f"Loaded {data.n} units with {data.d} covariates ({data.outcome_kind.value})")
    results, diagnostics, fitted = {}, {"clamp_rates": {}}, []
    if args.estimator in ("orec", "both"):
        estimate = estimate_att(data, config)
        results[estimate.estimator] = att_block(estimate)
        diagnostics["clamp_rates"][estimate.estimator] = estimate.clamp_rates
        fitted.append(estimate)
    if args.estimator in ("pt", "both"):
        results["pt"] = att_block(pt_baseline_att(data, config))
    if args.qtt:
        quantiles = estimate_qtts(data, config, args.qtt)
        results["qtt"] = {f"{fit.q:g}": qtt_block(fit) for fit in quantiles}
        fitted.extend(quantiles)
    diagnostics["warnings"] = collect_warnings(*fitted)
    return RunReport(command="estimate", meta=_meta(config, data, args.csv),
                     results=results, diagnostics=diagnostics)


def cmd_simulate(args, config, logger):
    """Panel CSV drawn from a preset design."""
    spec = dgp_spec(args.dgp, args.n, config.seed)
    drawn = simulate(spec, pre_periods=args.pre_periods)
    data, pre_periods = drawn if args.pre_periods > 0 else (drawn, None)
    logger.info(f"Simulated {spec.n} units from {spec.name} (true ATT {spec.true_att:g})")
    write_panel_csv(data, args.out if args.out else sys.stdout, pre_periods)


def cmd_diagnose(args, config, logger):
    """Overlap diagnostic and, with ``--placebo``, the pre-period placebo test."""
    panel, data = _load_panel(args.csv)
    results = {}
    if args.overlap or not args.placebo:
        kernel = default_kernel(data.x, config.bandwidth)
        results["overlap"] = overlap_block(overlap_diagnostic(data, kernel, threshold=args.threshold))
    if args.placebo:
        family = args.placebo_family or ("binary" if data.is_binary else "gaussian")
        results["placebo"] = placebo_block(placebo_orec_test(panel.pre_periods, data.a, data.x, family))
    return RunReport(command="diagnose", meta=_meta(config, data, args.csv),
                     results=results, diagnostics={"warnings": []})


def cmd_benchmark(args, config, logger):
    """Monte-Carlo rows for every sample size of the grid."""
    reports = []
    for n in args.n_grid:
        spec = dgp_spec(args.dgp, n, config.seed)
        reports.extend(monte_carlo_study(spec, args.mc_reps, config, args.estimators,
                                         n_jobs=args.jobs, quantile_level=args.quantile))
    write_mc_csv(reports, args.out if args.out else sys.stdout, raw=args.raw)


COMMANDS = {
    'estimate': cmd_estimate,
    'simulate': cmd_simulate,
    'diagnose': cmd_diagnose,
    'benchmark': cmd_benchmark,
}


def main(argv=None):
    """
    Main function for the command line executable.

    :return: process exit code; errors are printed on stderr as
        ``error: <code>: <message>``.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.init:
        try:
            copy_config_template()
        except OrecError as exc:
            print(f"error: {exc.code}: {exc}", file=sys.stderr)
            return exc.exit_code
        return EXIT_OK
    if args.command is None:
        parser.error("a command is required")

    logger = setup_logging(Path(args.logger) if args.logger else None,
                           level=logging.WARNING if args.quiet else logging.INFO)
    try:
        config = load_config()
        logger.info(f"Using {config['config']}")
        config = set_cl_args(config, args)
        parameters = check_parameters(config['parameters'], logger)
        report = COMMANDS[args.command](args, parameters, logger)
        if report is not None:
            _write(report.dumps(raw=args.raw), args.out)
    except OrecError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return exc.exit_code
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
