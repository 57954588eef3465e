"""Pulse optimization: steepest ascent on piecewise pulses and the Gaussian fit.

The objective everywhere is z3(T) of the reduced model started from
2 I1z I2z.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import kappa
from .dynamics import (
    CONTROL_GENERATOR,
    INITIAL_STATE,
    ChainParams,
    chain_product,
    expm_batch,
    final_z3_batch,
    prefix_products,
    propagate_reduced,
    reduced_generators,
)
from .pulses import PulseProgram, discretize
from .reference import BAND_EDGES, BAND_LABELS

log = logging.getLogger(__name__)


class OptimizationError(RuntimeError):
    pass


def _initial_vector(initial):
    return np.asarray(initial.as_array() if hasattr(initial, "as_array") else initial, dtype=float)


def _samples_for(pulse: PulseProgram, params: ChainParams) -> np.ndarray:
    if pulse.kind != "piecewise" or pulse.events:
        raise ValueError("gradient needs an event-free piecewise pulse")
    if len(pulse.samples) != params.steps:
        raise ValueError(
            f"pulse has {len(pulse.samples)} samples, grid has {params.steps} segments"
        )
    if abs(pulse.horizon - params.horizon) > 1e-12 * max(1.0, params.horizon):
        raise ValueError("pulse horizon does not match params")
    return np.asarray(pulse.samples, dtype=float)


def final_z3(samples, params: ChainParams, initial=INITIAL_STATE) -> float:
    """z3(T) for piecewise samples (exact exponentials)."""
    props = expm_batch(reduced_generators(params.xi, samples) * params.dt)
    return float(chain_product(props)[4] @ _initial_vector(initial))


def objective_and_gradient(samples, params: ChainParams, initial=INITIAL_STATE):
    """z3(T) and its derivative with respect to every segment amplitude.

    Forward states x_k and costates lambda_k (lambda_N selects z3 and is
    carried back by the transposed propagators) give
    dz3/dOmega_k = lambda_{k+1}^T (dU_k/dOmega_k) x_k.  The propagator
    derivative is the exact Frechet derivative, read off the upper right
    block of exp([[G dt, B dt], [0, G dt]]).
    """
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    gens = reduced_generators(params.xi, samples) * params.dt
    block = np.zeros((n, 10, 10))
    block[:, :5, :5] = gens
    block[:, 5:, 5:] = gens
    block[:, :5, 5:] = CONTROL_GENERATOR * params.dt
    big = expm_batch(block)
    props = big[:, :5, :5]
    dprops = big[:, :5, 5:]

    x0 = _initial_vector(initial)
    xs = np.empty((n + 1, 5))
    xs[0] = x0
    xs[1:] = prefix_products(props) @ x0
    # costate rows: lams[k] = e5^T U_{n-1} ... U_k
    lams = np.empty((n + 1, 5))
    lams[n] = (0.0, 0.0, 0.0, 0.0, 1.0)
    lams[:n] = prefix_products(props[::-1].transpose(0, 2, 1))[::-1, :, 4]
    grad = np.einsum("ki,kij,kj->k", lams[1:], dprops, xs[:-1])
    return float(xs[n, 4]), grad


def adjoint_gradient(pulse: PulseProgram, params: ChainParams, initial=INITIAL_STATE) -> np.ndarray:
    """Gradient of z3(T) with respect to the piecewise amplitudes of ``pulse``."""
    return objective_and_gradient(_samples_for(pulse, params), params, initial)[1]


def efficiency(pulse: PulseProgram, params: ChainParams, initial=INITIAL_STATE) -> float:
    return propagate_reduced(initial, pulse, params).efficiency


# --------------------------------------------------------------------------
# Steepest ascent


@dataclass
class OptimizationResult:
    pulse: PulseProgram
    efficiency: float
    iterations: int
    gradient_norm: float
    converged: bool
    history: list = field(default_factory=list, repr=False)


def default_initial_pulse(params: ChainParams) -> PulseProgram:
    """Gaussian with A = 1.0, sigma = 1.4 sampled on the grid."""
    return discretize(PulseProgram.gaussian(1.0, 1.4, params.horizon), params.steps)


def random_initial_pulse(params: ChainParams, rng: np.random.Generator, scale: float = 0.3) -> PulseProgram:
    """Low-amplitude uniform noise in [0, scale) on every segment."""
    return PulseProgram.piecewise(scale * rng.uniform(size=params.steps), params.horizon)


def grape_optimize(
    params: ChainParams,
    init: PulseProgram | None = None,
    max_iters: int = 4000,
    tol: float = 1e-12,
    *,
    gtol: float = 1e-9,
    armijo: float = 1e-4,
    initial=INITIAL_STATE,
) -> OptimizationResult:
    """Gradient ascent on z3(T) with a backtracking line search.

    Each line search starts at twice the previously accepted step and halves
    until the Armijo condition holds.  Stops when the relative improvement
    of an accepted step drops below ``tol``, the gradient norm drops below
    ``gtol``, the step underflows, or after ``max_iters`` iterations.
    """
    if init is None:
        init = default_initial_pulse(params)
    samples = discretize(init, params.steps).samples.copy()
    if init.events:
        raise ValueError("steepest ascent works on event-free pulses")
    f, g = objective_and_gradient(samples, params, initial)
    if not math.isfinite(f):
        raise OptimizationError(f"non-finite objective {f} at the initial pulse")
    history = [f]
    gnorm = float(np.linalg.norm(g))
    step = 1.0 / max(gnorm, 1e-300)
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        gg = gnorm * gnorm
        if gnorm <= gtol:
            converged = True
            break
        s = 2.0 * step
        while True:
            trial = samples + s * g
            f_trial = final_z3(trial, params, initial)
            if not math.isfinite(f_trial):
                raise OptimizationError(
                    f"non-finite objective at iteration {iterations}, step {s:g}, "
                    f"max |Omega| = {np.abs(trial).max():g}"
                )
            if f_trial >= f + armijo * s * gg:
                break
            s *= 0.5
            if s * gnorm < 1e-14 * (1.0 + np.abs(samples).max()):
                s = 0.0
                break
        if s == 0.0:
            converged = True
            break
        gain = f_trial - f
        samples = trial
        step = s
        f, g = objective_and_gradient(samples, params, initial)
        gnorm = float(np.linalg.norm(g))
        history.append(f)
        if gain < tol * abs(f):
            converged = True
            break
    log.debug("xi=%g: z3=%.10f after %d iterations, |g|=%.3g", params.xi, f, iterations, gnorm)
    bound = kappa(params.xi)
    if f > bound + 1e-6:
        raise OptimizationError(f"efficiency {f} exceeds the bound {bound}")
    return OptimizationResult(
        pulse=PulseProgram.piecewise(samples, params.horizon),
        efficiency=f,
        iterations=iterations,
        gradient_norm=gnorm,
        converged=converged,
        history=history,
    )


# --------------------------------------------------------------------------
# Gaussian ansatz


def _axis(lo: float, hi: float, step: float) -> np.ndarray:
    count = int(round((hi - lo) / step)) + 1
    return np.round(lo + step * np.arange(count), 12)


def gaussian_efficiency_grid(
    xi: float, a_values, sigma_values, horizon: float = 10.0, steps: int = 1000
) -> np.ndarray:
    """z3(T) for every (A, sigma) pair, shape ``(len(a_values), len(sigma_values))``."""
    a_values = np.asarray(a_values, dtype=float)
    sigma_values = np.asarray(sigma_values, dtype=float)
    if np.any(sigma_values <= 0):
        raise ValueError("sigma values must be > 0")
    mid = (np.arange(steps) + 0.5) * (horizon / steps)
    shape = np.exp(-(((mid - horizon / 2) / (math.sqrt(2.0) * sigma_values[:, None])) ** 2))
    amplitudes = a_values[:, None, None] * shape[None, :, :]
    return final_z3_batch(xi, amplitudes, horizon / steps)


@dataclass(frozen=True)
class GaussianFit:
    amplitude: float
    sigma: float
    efficiency: float

    @property
    def pulse_args(self):
        return self.amplitude, self.sigma


def _argmax(values: np.ndarray):
    # first maximum in C order = smallest A, then smallest sigma
    return np.unravel_index(int(np.argmax(values)), values.shape)


def optimize_gaussian(
    params: ChainParams,
    a_range=(0.5, 1.5),
    sigma_range=(0.8, 2.2),
    coarse_step: float = 0.01,
    fine_step: float = 0.001,
) -> GaussianFit:
    """Grid search for the best Gaussian (A, sigma).

    A coarse grid at ``coarse_step`` is followed by a fine grid at
    ``fine_step`` spanning one coarse cell on either side of the coarse
    winner.
    """
    a_axis = _axis(*a_range, coarse_step)
    s_axis = _axis(*sigma_range, coarse_step)
    coarse = gaussian_efficiency_grid(params.xi, a_axis, s_axis, params.horizon, params.steps)
    i, j = _argmax(coarse)
    a_fine = _axis(max(a_axis[i] - coarse_step, a_range[0]), min(a_axis[i] + coarse_step, a_range[1]), fine_step)
    s_fine = _axis(max(s_axis[j] - coarse_step, sigma_range[0]), min(s_axis[j] + coarse_step, sigma_range[1]), fine_step)
    fine = gaussian_efficiency_grid(params.xi, a_fine, s_fine, params.horizon, params.steps)
    i, j = _argmax(fine)
    a_best, s_best = float(a_fine[i]), float(s_fine[j])
    eff = efficiency(PulseProgram.gaussian(a_best, s_best, params.horizon), params)
    return GaussianFit(a_best, s_best, eff)


# --------------------------------------------------------------------------
# Sweep and robustness map


@dataclass(frozen=True)
class SweepRow:
    xi: float
    A_opt: float
    sigma_opt: float
    eff_gaussian: float
    eff_descent: float


def sweep_row(xi: float, horizon: float = 10.0, steps: int = 1000, max_iters: int = 4000, tol: float = 1e-12) -> SweepRow:
    """Gaussian fit, then steepest ascent started from the fitted Gaussian."""
    params = ChainParams(xi, horizon, steps)
    fit = optimize_gaussian(params)
    init = discretize(PulseProgram.gaussian(fit.amplitude, fit.sigma, horizon), steps)
    result = grape_optimize(params, init, max_iters=max_iters, tol=tol)
    return SweepRow(float(xi), fit.amplitude, fit.sigma, fit.efficiency, result.efficiency)


def _sweep_row_args(args):
    return sweep_row(*args)


def sweep_table(
    xis,
    horizon: float = 10.0,
    steps: int = 1000,
    max_iters: int = 4000,
    tol: float = 1e-12,
    workers: int = 1,
) -> list[SweepRow]:
    """One :class:`SweepRow` per xi, in input order."""
    jobs = [(float(xi), horizon, steps, max_iters, tol) for xi in xis]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_row_args, jobs))
    return [sweep_row(*job) for job in jobs]


def classify_band(value: float) -> str:
    for edge, label in zip(BAND_EDGES, BAND_LABELS):
        if value >= edge:
            return label
    return BAND_LABELS[-1]


def band_legend() -> list[dict]:
    uppers = (None,) + BAND_EDGES
    lowers = BAND_EDGES + (None,)
    return [
        {"label": label, "lower": lo, "upper": hi}
        for label, lo, hi in zip(BAND_LABELS, lowers, uppers)
    ]


def _as_axis(spec) -> np.ndarray:
    if isinstance(spec, tuple) and len(spec) == 3:
        return _axis(*spec)
    return np.asarray(spec, dtype=float)


@dataclass
class RobustnessGrid:
    xi: float
    A_axis: np.ndarray
    sigma_axis: np.ndarray
    efficiency: np.ndarray
    bands: np.ndarray

    @property
    def best(self):
        i, j = _argmax(self.efficiency)
        return float(self.A_axis[i]), float(self.sigma_axis[j]), float(self.efficiency[i, j])


def robustness_grid(
    xi: float = 1.0,
    A_range=(0.5, 2.0, 0.01),
    sigma_range=(0.5, 2.5, 0.01),
    horizon: float = 10.0,
    steps: int = 1000,
) -> RobustnessGrid:
    """Efficiency over an (A, sigma) grid with robustness-band labels.

    Ranges are ``(lo, hi, step)`` tuples or explicit axis arrays.
    """
    a_axis = _as_axis(A_range)
    s_axis = _as_axis(sigma_range)
    if a_axis.size == 0 or s_axis.size == 0:
        raise ValueError("ranges must be nonempty")
    eff = gaussian_efficiency_grid(xi, a_axis, s_axis, horizon, steps)
    bands = np.vectorize(classify_band, otypes=[object])(eff)
    return RobustnessGrid(float(xi), a_axis, s_axis, eff, bands)
