"""Time traces of the five transfer variables and theta3 for three pulse programs at one xi.

Writes one CSV per program (hard-pulse CINEPT, best Gaussian, steepest
ascent) plus the optimized pulse shapes, and prints the final efficiencies
against the bound.
"""
import argparse
from pathlib import Path

from spinorder.bounds import kappa
from spinorder.dynamics import INITIAL_STATE, ChainParams, propagate_reduced
from spinorder.optimizer import grape_optimize, optimize_gaussian
from spinorder.pulses import PulseProgram, cinept_program, discretize, write_pulse


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--xi", type=float, default=1.0)
    parser.add_argument("--outdir", default="results/traces")
    parser.add_argument("--max-iters", type=int, default=2000)
    args = parser.parse_args()

    params = ChainParams(args.xi)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    fit = optimize_gaussian(params)
    gaussian = PulseProgram.gaussian(fit.amplitude, fit.sigma, params.horizon)
    grape = grape_optimize(params, discretize(gaussian, params.steps), max_iters=args.max_iters)
    programs = {"cinept": cinept_program(args.xi), "gaussian": gaussian, "grape": grape.pulse}

    print(f"xi={args.xi}  bound kappa={kappa(args.xi):.4f}")
    for name, program in programs.items():
        traj = propagate_reduced(INITIAL_STATE, program, params)
        (outdir / f"{name}_trajectory.csv").write_text(traj.to_csv())
        print(f"  {name:9s} z3(T)={traj.efficiency:.4f}  theta3(T)={traj.theta3[-1]:.4f}")
    write_pulse(gaussian, outdir / "gaussian_pulse.json")
    write_pulse(grape.pulse, outdir / "grape_pulse.csv")
    print(f"wrote traces to {outdir}")


if __name__ == "__main__":
    main()
