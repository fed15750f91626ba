"""Command-line front-end.

Subcommands:
  run           execute a scenario config and write its artifact CSVs
  sweep         repeat a scenario over one parameter
  complexity    FLOP calculator for the regeneration/learning stages
  noise-budget  TX-induced noise densities at the receiver input

Exit codes: 0 success, 2 configuration error, 3 learning divergence,
4 basis degeneracy, 5 other domain error (bad input, estimation or
numeric failure), 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .analysis import complexity_report
from .basis import METHOD_EIGEN, METHODS
from .errors import (
    ConfigurationError,
    DegeneracyError,
    DivergenceError,
    RfCancelError,
)
from .rf_chain import total_tx_induced_noise, tx_noise_density
from .runner import SWEEPABLE, run_scenario, sweep
from .scenario import load_scenario

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_DEGENERACY = 4
EXIT_DOMAIN = 5


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rfcancel",
        description="Baseband simulation of adaptive nonlinear RF "
        "self-interference cancellation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario config")
    p_run.add_argument("--config", required=True, help="scenario YAML file")
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.add_argument("--seed-override", type=int, default=None)

    p_sweep = sub.add_parser("sweep", help="sweep one scenario parameter")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--parameter", required=True, choices=SWEEPABLE)
    p_sweep.add_argument(
        "--values", required=True,
        help="comma-separated list of parameter values",
    )
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--seed-override", type=int, default=None)

    p_cx = sub.add_parser("complexity", help="FLOP calculator")
    p_cx.add_argument("--max-order", type=int, required=True)
    p_cx.add_argument("--filter-length", type=int, required=True,
                      help="taps per order (N+1)")
    p_cx.add_argument("--block-size", type=int, default=13000)
    p_cx.add_argument("--num-blocks", type=int, default=25)
    p_cx.add_argument("--sample-rate-hz", type=float, default=61.44e6)
    p_cx.add_argument("--orth-method", choices=METHODS, default=METHOD_EIGEN)

    p_nb = sub.add_parser("noise-budget", help="TX noise densities at the RX input")
    p_nb.add_argument("--config", required=True,
                      help="scenario YAML (only its noise section is used)")
    return parser


def _cmd_run(args) -> int:
    out = Path(args.out) if args.out else None
    result = run_scenario(args.config, output_dir=out, master_seed=args.seed_override)
    out_dir = result.scenario.output_dir
    print(f"estimated delay: {result.delay} samples")
    print(f"leakage power:   {result.leakage_power_dbm:.2f} dBm")
    print(f"linear gain:     {result.linear.gain_db:.2f} dB")
    print(f"nonlinear gain:  {result.nonlinear.gain_db:.2f} dB")
    print(f"artifacts in:    {out_dir}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad sweep values: {exc}") from exc
    out = Path(args.out) if args.out else None
    target = sweep(args.config, args.parameter, values, output_dir=out,
                   master_seed=args.seed_override)
    print(f"wrote {target}")
    return EXIT_OK


def _cmd_complexity(args) -> int:
    report = complexity_report(
        max_order=args.max_order,
        filter_memory=args.filter_length - 1,
        block_size=args.block_size,
        num_blocks=args.num_blocks,
        sample_rate_hz=args.sample_rate_hz,
        orth_method=args.orth_method,
    )
    print(f"basis generation: {report.basis_gen_flop_per_sample} FLOP/sample")
    print(f"orthogonalization({report.orth_method}): "
          f"{report.orth_flop_per_sample} FLOP/sample")
    print(f"filtering:        {report.filtering_flop_per_sample} FLOP/sample")
    print(f"total:            {report.total_flop_per_sample} FLOP/sample")
    print(f"regeneration:     {report.regen_gflops:.2f} GFLOP/s")
    print(f"learning:         {report.learning_mflop:.2f} MFLOP")
    return EXIT_OK


def _cmd_noise_budget(args) -> int:
    scenario = load_scenario(args.config)
    budget = total_tx_induced_noise(scenario.noise_main, scenario.noise_aux)
    print(f"main TX noise density:  {tx_noise_density(scenario.noise_main):.2f} dBm/Hz")
    print(f"aux TX noise density:   {tx_noise_density(scenario.noise_aux):.2f} dBm/Hz")
    print(f"main after isolation:   {budget.main_dbm_hz:.2f} dBm/Hz")
    print(f"aux after coupler:      {budget.aux_dbm_hz:.2f} dBm/Hz")
    print(f"total at RX input:      {budget.total_dbm_hz:.2f} dBm/Hz")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "complexity": _cmd_complexity,
        "noise-budget": _cmd_noise_budget,
    }
    try:
        return handlers[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"learning diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except DegeneracyError as exc:
        print(f"basis degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERACY
    except RfCancelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
