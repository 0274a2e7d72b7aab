"""Command-line interface: run, solve, validate, power.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 internal
numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from .errors import ConfigurationError, ContractError, EstimationError, ModelError
from .estimator import blue_covariance, transmit_power
from .experiment import (
    config_from_file,
    emit_results,
    paper_defaults,
    read_solution,
    run_experiment,
    write_solution,
)
from .montecarlo import run_trials
from .network import equicorrelated_covariance, nearest_neighbor_adjacency, signal_covariance
from .optimizer import optimize_mixing

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad arguments, which this interface
    # reserves for I/O problems; surface usage problems as config errors.
    def error(self, message):
        raise _UsageError(message)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _load_config(args):
    if args.config is not None:
        config = config_from_file(args.config)
    else:
        config = paper_defaults()
    if getattr(args, "seed", None) is not None:
        config = dataclasses.replace(
            config, field=dataclasses.replace(config.field, seed=args.seed, positions=None)
        )
    if getattr(args, "out", None) is not None:
        config = dataclasses.replace(config, output=args.out)
    return config


def _cmd_run(args) -> int:
    config = _load_config(args)
    result = run_experiment(config)
    paths = emit_results(result, config.output, figure=not args.no_figure)
    print(f"{len(result.rows)} sweep cells")
    for name in ("csv", "manifest", "figure"):
        if name in paths:
            print(f"{name}: {paths[name]}")
    return EXIT_OK


def _solve_cell(config, q: int, p0: float):
    field = config.field.build()
    r_theta = signal_covariance(field, config.covariance)
    r_n = equicorrelated_covariance(
        field.num_sensors,
        config.covariance.observation_noise.variance,
        config.covariance.observation_noise.correlation,
    )
    r_v = equicorrelated_covariance(
        field.num_connected,
        config.covariance.channel_noise.variance,
        config.covariance.channel_noise.correlation,
    )
    adjacency = nearest_neighbor_adjacency(field, q)
    result = optimize_mixing(field, r_theta, r_n, r_v, adjacency,
                             config.solver.solver_config(p0, config.solver.seed))
    return field, result


def _cmd_solve(args) -> int:
    config = _load_config(args)
    q = args.q if args.q is not None else config.q_values[0]
    p0 = args.p0 if args.p0 is not None else config.p0_values[0]
    field, result = _solve_cell(config, q, p0)
    report = result.report
    print(f"q = {q}")
    print(f"p0 = {_fmt(p0)}")
    print(f"distortion = {_fmt(report.distortion)}")
    print(f"surrogate = {_fmt(report.surrogate)}")
    print(f"lower_bound = {_fmt(report.lower_bound)}")
    print(f"power_used = {_fmt(report.power)}")
    print(f"rank_ok = {_fmt(report.rank_ok)}")
    print(f"converged = {_fmt(result.converged)}")
    print(f"restart_index = {result.restart_index}")
    if args.out is not None:
        write_solution(args.out, config, field, q, p0, result)
        print(f"solution: {args.out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    solution = read_solution(args.config)
    report = blue_covariance(solution["mixing"], solution["gains"], solution["r_n"],
                             solution["r_v"], r_theta=solution["r_theta"])
    if not report.rank_ok:
        raise EstimationError("stored mixing matrix is not estimable; nothing to validate")
    batch = run_trials(solution["mixing"], solution["gains"], solution["r_theta"],
                       solution["r_n"], solution["r_v"], args.trials, args.seed)
    mse_gap = abs(batch.empirical_mse_total - report.distortion)
    power_gap = abs(batch.empirical_power - report.power)
    bias_sigmas = float(np.max(np.abs(batch.empirical_bias) /
                               np.maximum(batch.bias_stderr, 1e-300)))
    print(f"trials = {batch.num_trials}")
    print(f"analytic_distortion = {_fmt(report.distortion)}")
    print(f"empirical_mse = {_fmt(batch.empirical_mse_total)}")
    print(f"mse_stderr = {_fmt(batch.mse_stderr)}")
    print(f"analytic_power = {_fmt(report.power)}")
    print(f"empirical_power = {_fmt(batch.empirical_power)}")
    print(f"power_stderr = {_fmt(batch.power_stderr)}")
    print(f"max_bias_sigmas = {_fmt(bias_sigmas)}")
    ok = (mse_gap <= 5 * batch.mse_stderr
          and power_gap <= 5 * batch.power_stderr
          and bias_sigmas <= 5.0)
    print(f"verdict = {'PASS' if ok else 'FAIL'} (5 standard error convention)")
    if not ok:
        raise ModelError("Monte Carlo statistics disagree with the analytic values "
                         "beyond 5 standard errors")
    return EXIT_OK


def _cmd_power(args) -> int:
    solution = read_solution(args.config)
    value = transmit_power(solution["mixing"], solution["r_theta"], solution["r_n"])
    print(f"transmit_power = {_fmt(value)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="collabsense",
                     description="Collaborative sensing distortion experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="full distortion-vs-power sweep")
    run.add_argument("--config", help="JSON experiment config (or a manifest)")
    run.add_argument("--paper-defaults", action="store_true",
                     help="use the built-in default scenario")
    run.add_argument("--seed", type=int, help="override the network realization seed")
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--no-figure", action="store_true", help="skip the rendered figure")
    run.set_defaults(func=_cmd_run)

    solve = sub.add_parser("solve", help="optimize a single (q, p0) cell")
    solve.add_argument("--config", help="JSON experiment config")
    solve.add_argument("--paper-defaults", action="store_true")
    solve.add_argument("--seed", type=int, help="override the network realization seed")
    solve.add_argument("--q", type=int, help="collaboration degree (default: first in config)")
    solve.add_argument("--p0", type=float, help="power budget (default: first in config)")
    solve.add_argument("--out", help="write the optimized cell as a solution JSON")
    solve.set_defaults(func=_cmd_solve)

    validate = sub.add_parser("validate", help="Monte Carlo check of a stored solution")
    validate.add_argument("--config", required=True, help="solution JSON from 'solve --out'")
    validate.add_argument("--trials", type=int, default=100000)
    validate.add_argument("--seed", type=int, default=99)
    validate.set_defaults(func=_cmd_validate)

    power = sub.add_parser("power", help="transmit power of a stored solution")
    power.add_argument("--config", required=True, help="solution JSON from 'solve --out'")
    power.set_defaults(func=_cmd_power)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if getattr(args, "config", None) is not None and getattr(args, "paper_defaults", False):
        print("error: --config and --paper-defaults are mutually exclusive", file=sys.stderr)
        return EXIT_CONFIG
    if args.command in ("run", "solve") and args.config is None and not args.paper_defaults:
        print("error: pass --config <path> or --paper-defaults", file=sys.stderr)
        return EXIT_CONFIG

    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ModelError, EstimationError, ContractError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
