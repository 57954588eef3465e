"""Command-line front end.

Data goes to ``--out`` (or stdout); diagnostics go to stderr.  Exit status
is 1 for invalid arguments and 2 for numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds, optimizer, oracle, pulses
from .dynamics import INITIAL_STATE, ChainParams, format_number, propagate_reduced
from .reference import TABLE_I_XI

COMMANDS = (
    "bound",
    "cinept",
    "evolve",
    "optimize",
    "optimize-gaussian",
    "sweep",
    "robustness",
    "oracle-check",
)


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    xi: float | None = None
    horizon: float = 10.0
    steps: int = 1000
    seed: int = 0
    out: str | None = None
    format: str = "csv"
    gaussian: tuple[float, float] | None = None
    pulse: str | None = None
    table1: bool = False
    xis: list = field(default_factory=list)
    a_range: tuple[float, float, float] = (0.5, 2.0, 0.01)
    sigma_range: tuple[float, float, float] = (0.5, 2.5, 0.01)
    max_iters: int = 4000
    tol: float = 1e-12
    init: str = "gaussian"


def _num(x: float) -> float:
    """Round to the 12 significant digits used in every output file."""
    return float(format_number(x))


def _csv(rows, header) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([v if isinstance(v, str) else format_number(v) for v in row])
    return buf.getvalue()


def _emit(text: str, config: RunConfig, stdout) -> None:
    if config.out:
        Path(config.out).write_text(text)
    else:
        stdout.write(text)


def _note(message: str, stderr) -> None:
    stderr.write(message.rstrip("\n") + "\n")


def _require_xi(config: RunConfig) -> float:
    if config.xi is None:
        raise UsageError(f"{config.command} needs --xi")
    if not (config.xi >= 0 and math.isfinite(config.xi)):
        raise UsageError(f"xi must be a finite number >= 0, got {config.xi}")
    return config.xi


def _params(config: RunConfig) -> ChainParams:
    try:
        return ChainParams(_require_xi(config), config.horizon, config.steps)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _pulse_from_config(config: RunConfig, params: ChainParams):
    if config.gaussian and config.pulse:
        raise UsageError("give either --gaussian or --pulse, not both")
    if config.gaussian:
        a, sigma = config.gaussian
        return pulses.PulseProgram.gaussian(a, sigma, params.horizon)
    if config.pulse:
        pulse = pulses.read_pulse(config.pulse)
        if abs(pulse.horizon - params.horizon) > 1e-9:
            raise UsageError(f"pulse horizon {pulse.horizon} differs from --horizon {params.horizon}")
        if pulse.kind == "piecewise" and len(pulse.samples) != params.steps:
            raise UsageError(f"pulse has {len(pulse.samples)} samples; pass --steps {len(pulse.samples)}")
        return pulse
    return None


# --------------------------------------------------------------------------
# Commands


def cmd_bound(config, stdout, stderr):
    xi = _require_xi(config)
    report = bounds.bound_report(xi)
    payload = {k: _num(v) for k, v in report.as_dict().items()}
    if config.format == "json":
        _emit(json.dumps(payload) + "\n", config, stdout)
    else:
        _emit(_csv([list(payload.values())], list(payload)), config, stdout)


def cmd_cinept(config, stdout, stderr):
    params = _params(config)
    try:
        program = pulses.cinept_program(params.xi, params.horizon)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    traj = propagate_reduced(INITIAL_STATE, program, params)
    if config.format == "json":
        payload = {
            "xi": _num(params.xi),
            "t_m": _num(bounds.cinept_time(params.xi)),
            "eta_ci": _num(bounds.cinept_efficiency(params.xi)),
            "simulated": _num(traj.efficiency),
        }
        _emit(json.dumps(payload) + "\n", config, stdout)
    else:
        _emit(traj.to_csv(), config, stdout)


def cmd_evolve(config, stdout, stderr):
    params = _params(config)
    pulse = _pulse_from_config(config, params)
    if pulse is None:
        raise UsageError("evolve needs --gaussian A,SIGMA or --pulse FILE")
    traj = propagate_reduced(INITIAL_STATE, pulse, params)
    if config.format == "json":
        payload = {"xi": _num(params.xi), "efficiency": _num(traj.efficiency),
                   "final": {k: _num(v) for k, v in vars(traj.final).items()}}
        _emit(json.dumps(payload) + "\n", config, stdout)
    else:
        _emit(traj.to_csv(), config, stdout)
    _note(f"z3(T) = {format_number(traj.efficiency)}", stderr)


def cmd_optimize(config, stdout, stderr):
    params = _params(config)
    init = _pulse_from_config(config, params)
    if init is None and config.init == "random":
        init = optimizer.random_initial_pulse(params, np.random.default_rng(config.seed))
    elif init is not None:
        init = pulses.discretize(init, params.steps)
    result = optimizer.grape_optimize(params, init, max_iters=config.max_iters, tol=config.tol)
    _emit(pulses.pulse_to_csv(result.pulse), config, stdout)
    # efficiency of the pulse as written (12 significant digits)
    written = pulses.pulse_from_csv(pulses.pulse_to_csv(result.pulse))
    summary = {
        "xi": _num(params.xi),
        "efficiency": _num(optimizer.efficiency(written, params)),
        "iterations": result.iterations,
        "gradient_norm": _num(result.gradient_norm),
        "converged": result.converged,
    }
    _note(json.dumps(summary), stderr)


def cmd_optimize_gaussian(config, stdout, stderr):
    params = _params(config)
    fit = optimizer.optimize_gaussian(params)
    pulse = pulses.PulseProgram.gaussian(fit.amplitude, fit.sigma, params.horizon)
    _emit(pulses.pulse_to_json(pulse) + "\n", config, stdout)
    _note(json.dumps({"xi": _num(params.xi), "A": fit.amplitude, "sigma": fit.sigma,
                      "efficiency": _num(fit.efficiency)}), stderr)


def cmd_sweep(config, stdout, stderr):
    if config.table1:
        xis = list(TABLE_I_XI)
    elif config.xis:
        xis = list(config.xis)
    else:
        raise UsageError("sweep needs --table1 or --xi LIST")
    for xi in xis:
        if not xi >= 0:
            raise UsageError(f"xi must be >= 0, got {xi}")
    rows = optimizer.sweep_table(xis, config.horizon, config.steps, config.max_iters, config.tol)
    text = _csv(
        [(r.xi, r.A_opt, r.sigma_opt, r.eff_gaussian, r.eff_descent) for r in rows],
        ("xi", "A", "sigma", "eff_gaussian", "eff_descent"),
    )
    _emit(text, config, stdout)


def cmd_robustness(config, stdout, stderr):
    xi = 1.0 if config.xi is None else _require_xi(config)
    grid = optimizer.robustness_grid(xi, config.a_range, config.sigma_range, config.horizon, config.steps)
    legend = {"xi": _num(xi), "bands": optimizer.band_legend()}
    if config.format == "json":
        payload = {
            "xi": _num(xi),
            "A": [_num(a) for a in grid.A_axis],
            "sigma": [_num(s) for s in grid.sigma_axis],
            "efficiency": [[_num(v) for v in row] for row in grid.efficiency],
            "bands": grid.bands.tolist(),
            "legend": legend["bands"],
        }
        _emit(json.dumps(payload) + "\n", config, stdout)
        return
    header = ["A\\sigma"] + [format_number(s) for s in grid.sigma_axis]
    rows = [[a, *row] for a, row in zip(grid.A_axis, grid.efficiency)]
    _emit(_csv(rows, header), config, stdout)
    legend_text = json.dumps(legend) + "\n"
    if config.out:
        Path(str(config.out) + ".legend.json").write_text(legend_text)
    else:
        stderr.write(legend_text)
    a, s, best = grid.best
    _note(f"max efficiency {format_number(best)} at A={format_number(a)}, sigma={format_number(s)}", stderr)


def cmd_oracle_check(config, stdout, stderr):
    params = _params(config)
    pulse = _pulse_from_config(config, params)
    if pulse is None:
        pulse = pulses.random_pulse(np.random.default_rng(config.seed), params.steps, params.horizon)
    comparison = oracle.compare_reduced(pulse, params, tolerance=None)
    if config.out:
        Path(config.out).write_text(comparison.to_csv())
    verdict = "PASS" if comparison.passed else "FAIL"
    stdout.write(f"max deviation {comparison.max_deviation:.3e}\ny2 sign {comparison.y2_sign:+.0f}\n{verdict}\n")
    if not comparison.passed:
        raise NumericalFailure(f"oracle deviation {comparison.max_deviation:.3e} exceeds 1e-6")


HANDLERS = {
    "bound": cmd_bound,
    "cinept": cmd_cinept,
    "evolve": cmd_evolve,
    "optimize": cmd_optimize,
    "optimize-gaussian": cmd_optimize_gaussian,
    "sweep": cmd_sweep,
    "robustness": cmd_robustness,
    "oracle-check": cmd_oracle_check,
}


def run(config: RunConfig, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    try:
        HANDLERS[config.command](config, stdout, stderr)
    except UsageError as exc:
        _note(f"error: {exc}", stderr)
        return 1
    except (NumericalFailure, optimizer.OptimizationError, oracle.OracleError,
            bounds.BoundViolation, FloatingPointError) as exc:
        _note(f"numerical failure: {exc}", stderr)
        return 2
    return 0


# --------------------------------------------------------------------------
# Argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _pair(text: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A,SIGMA, got {text!r}")
    if not (math.isfinite(a) and b > 0):
        raise argparse.ArgumentTypeError("need finite A and SIGMA > 0")
    return a, b


def _range(text: str) -> tuple[float, float, float]:
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI:STEP, got {text!r}")
    if not (step > 0 and hi >= lo):
        raise argparse.ArgumentTypeError("need HI >= LO and STEP > 0")
    return lo, hi, step


def _xi_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or comma list, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--xi", type=_xi_list, help="normalized relaxation (comma list for sweep)")
    common.add_argument("--horizon", type=float, default=10.0)
    common.add_argument("--steps", type=int, default=1000)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--gaussian", type=_pair, metavar="A,SIGMA")
    common.add_argument("--pulse", metavar="FILE", help="pulse file (CSV t,omega or Gaussian JSON)")
    common.add_argument("--table1", action="store_true")
    common.add_argument("--a-range", type=_range, default=(0.5, 2.0, 0.01), metavar="LO:HI:STEP")
    common.add_argument("--sigma-range", type=_range, default=(0.5, 2.5, 0.01), metavar="LO:HI:STEP")
    common.add_argument("--max-iters", type=int, default=None)
    common.add_argument("--tol", type=float, default=1e-12)
    common.add_argument("--init", choices=("gaussian", "random"), default="gaussian")

    parser = _Parser(prog="spinorder", description="Relaxation-optimized spin-order transfer.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        aliases = ["bounds"] if name == "bound" else []
        sub.add_parser(name, parents=[common], aliases=aliases)
    return parser


def config_from_args(argv=None) -> RunConfig:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = "bound" if args.command == "bounds" else args.command
    xis = args.xi or []
    if command != "sweep" and len(xis) > 1:
        parser.error("--xi takes a single value for this command")
    fmt = args.format or ("json" if command == "bound" else "csv")
    max_iters = args.max_iters if args.max_iters is not None else (2000 if command == "sweep" else 4000)
    if max_iters < 1 or args.steps < 2:
        parser.error("--max-iters must be >= 1 and --steps >= 2")
    return RunConfig(
        command=command,
        xi=xis[0] if len(xis) == 1 and command != "sweep" else None,
        horizon=args.horizon,
        steps=args.steps,
        seed=args.seed,
        out=args.out,
        format=fmt,
        gaussian=args.gaussian,
        pulse=args.pulse,
        table1=args.table1,
        xis=xis if command == "sweep" else [],
        a_range=args.a_range,
        sigma_range=args.sigma_range,
        max_iters=max_iters,
        tol=args.tol,
        init=args.init,
    )


def main(argv=None) -> int:
    config = config_from_args(argv)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
