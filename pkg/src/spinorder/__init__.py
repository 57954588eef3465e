"""Relaxation-optimized transfer of spin order 2I1zI2z -> 2I2zI3z along an Ising chain."""
from .bounds import bound_report, certify_bound, cinept_efficiency, cinept_time, kappa
from .dynamics import (
    INITIAL_STATE,
    ChainParams,
    ReducedState,
    Trajectory,
    propagate_p_linear,
    propagate_r_system,
    propagate_reduced,
    reduced_generator,
)
from .optimizer import (
    adjoint_gradient,
    grape_optimize,
    optimize_gaussian,
    robustness_grid,
    sweep_table,
)
from .pulses import PulseProgram, cinept_program, discretize, gaussian_sample

__version__ = "0.1.0"
