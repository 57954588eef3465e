import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinorder.bounds import cinept_efficiency, kappa
from spinorder.dynamics import ChainParams
from spinorder.optimizer import (
    GaussianFit,
    OptimizationError,
    adjoint_gradient,
    band_legend,
    classify_band,
    default_initial_pulse,
    efficiency,
    final_z3,
    gaussian_efficiency_grid,
    grape_optimize,
    objective_and_gradient,
    optimize_gaussian,
    random_initial_pulse,
    robustness_grid,
    sweep_table,
)
from spinorder.pulses import PulseProgram, cinept_program, random_pulse


def central_differences(samples, params, h=1e-6, index=None):
    index = range(len(samples)) if index is None else index
    out = []
    for k in index:
        e = np.zeros_like(samples)
        e[k] = h
        out.append((final_z3(samples + e, params) - final_z3(samples - e, params)) / (2 * h))
    return np.array(out)


# --- gradient --------------------------------------------------------------


def test_gradient_zero_pulse_first_segment():
    params = ChainParams(1.0, 10.0, 200)
    samples = np.zeros(200)
    g = adjoint_gradient(PulseProgram.piecewise(samples, 10.0), params)
    fd = central_differences(samples, params, index=[0])
    assert abs(g[0] - fd[0]) <= 1e-5 * abs(fd[0])


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 10_000), st.floats(min_value=0.0, max_value=2.0))
def test_gradient_matches_finite_differences(seed, xi):
    params = ChainParams(xi, 10.0, 100)
    samples = random_pulse(np.random.default_rng(seed), 100).samples
    g = adjoint_gradient(PulseProgram.piecewise(samples, 10.0), params)
    fd = central_differences(samples, params)
    assert np.abs(g - fd).max() <= 1e-5 * np.abs(fd).max()


def test_objective_matches_propagator():
    params = ChainParams(0.6, 10.0, 300)
    pulse = random_pulse(np.random.default_rng(2), 300)
    f, _ = objective_and_gradient(pulse.samples, params)
    assert f == pytest.approx(efficiency(pulse, params), abs=1e-13)


def test_gradient_rejects_mismatch():
    params = ChainParams(1.0, 10.0, 100)
    with pytest.raises(ValueError):
        adjoint_gradient(PulseProgram.piecewise(np.zeros(50), 10.0), params)
    with pytest.raises(ValueError):
        adjoint_gradient(PulseProgram.gaussian(1.0, 1.0), params)


# --- steepest ascent -------------------------------------------------------


def test_grape_xi_one():
    params = ChainParams(1.0)
    res = grape_optimize(params, max_iters=600)
    assert res.efficiency == pytest.approx(0.2512, abs=0.002)
    assert res.efficiency <= kappa(1.0) + 1e-6
    assert np.all(np.diff(res.history) >= 0)
    assert res.iterations <= 600


def test_grape_lossless():
    res = grape_optimize(ChainParams(0.0), max_iters=600)
    assert res.efficiency >= 1.0 - 1e-3


def test_grape_xi_half():
    res = grape_optimize(ChainParams(0.5), max_iters=600)
    assert res.efficiency == pytest.approx(0.4726, abs=0.002)


def test_grape_stationarity_at_convergence():
    params = ChainParams(1.0, 10.0, 200)
    res = grape_optimize(params, max_iters=20_000, tol=0.0, gtol=1e-6)
    assert res.converged
    assert res.gradient_norm <= 1e-6


def test_grape_rejects_events():
    with_event = PulseProgram("piecewise", 10.0, samples=np.zeros(1000), events=((0.0, 1.0),))
    with pytest.raises(ValueError):
        grape_optimize(ChainParams(1.0), with_event)


def test_grape_non_finite_objective():
    params = ChainParams(1.0, 10.0, 10)
    bad = PulseProgram.piecewise(np.full(10, np.nan), 10.0)
    with pytest.raises(OptimizationError):
        grape_optimize(params, bad)


def test_default_and_random_init():
    params = ChainParams(1.0)
    init = default_initial_pulse(params)
    assert init.samples.max() == pytest.approx(1.0, abs=1e-3)
    r = random_initial_pulse(params, np.random.default_rng(0))
    assert r.samples.min() >= 0 and r.samples.max() < 0.3


# --- Gaussian ansatz -------------------------------------------------------


def test_gaussian_grid_matches_propagator():
    params = ChainParams(0.7)
    grid = gaussian_efficiency_grid(0.7, [0.9, 1.1], [1.2, 1.5])
    for i, a in enumerate([0.9, 1.1]):
        for j, s in enumerate([1.2, 1.5]):
            assert grid[i, j] == pytest.approx(efficiency(PulseProgram.gaussian(a, s), params), abs=1e-12)


@pytest.mark.parametrize(
    "xi,A,sigma,eff",
    [(1.0, 1.11, 1.30, 0.2510), (0.05, 0.79, 1.60, 0.9203), (0.40, 0.93, 1.46, 0.5428)],
)
def test_optimize_gaussian_rows(xi, A, sigma, eff):
    fit = optimize_gaussian(ChainParams(xi))
    assert isinstance(fit, GaussianFit)
    assert fit.amplitude == pytest.approx(A, abs=0.03)
    assert fit.sigma == pytest.approx(sigma, abs=0.05)
    assert fit.efficiency == pytest.approx(eff, abs=0.001)


def test_optimize_gaussian_tie_break():
    # A = 0 makes the objective flat; the first grid point must win
    params = ChainParams(1.0, 10.0, 50)
    fit = optimize_gaussian(params, a_range=(0.0, 0.0), sigma_range=(1.0, 1.02), coarse_step=0.01)
    assert (fit.amplitude, fit.sigma) == (0.0, 1.0)


# --- sweep -----------------------------------------------------------------


def test_sweep_empty_and_order():
    assert sweep_table([]) == []
    rows = sweep_table([0.9, 0.3], steps=200, max_iters=50)
    assert [r.xi for r in rows] == [0.9, 0.3]
    for r in rows:
        assert r.eff_descent >= r.eff_gaussian - 1e-4
        assert r.eff_descent <= kappa(r.xi) + 1e-6


def test_sweep_parallel_equals_serial():
    serial = sweep_table([0.8, 0.2], steps=100, max_iters=20)
    parallel = sweep_table([0.8, 0.2], steps=100, max_iters=20, workers=2)
    assert serial == parallel


def test_sweep_lossless_row():
    (row,) = sweep_table([0.0], max_iters=300)
    assert row.eff_gaussian == pytest.approx(0.9999, abs=1e-3)
    assert row.eff_descent >= 1.0 - 1e-3


# --- robustness ------------------------------------------------------------


def test_band_thresholds():
    assert classify_band(0.2510) == "white"
    assert classify_band(0.24) == "white"
    assert classify_band(0.2399) == "gray1"
    assert classify_band(0.225) == "gray2"
    assert classify_band(0.215) == "gray3"
    assert classify_band(0.205) == "gray4"
    assert classify_band(0.1727) == "gray5"
    assert classify_band(0.1726) == "black"
    legend = band_legend()
    assert [b["label"] for b in legend][0] == "white"
    assert legend[-1]["upper"] == 0.1727


def test_robustness_examples():
    grid = robustness_grid(1.0, [1.11], [0.01, 1.30])
    assert grid.efficiency[0, 1] == pytest.approx(0.2510, abs=5e-4)
    assert grid.bands[0, 1] == "white"
    assert grid.efficiency[0, 0] < cinept_efficiency(1.0)
    assert grid.bands[0, 0] == "black"
    assert np.all(grid.efficiency <= kappa(1.0))


def test_robustness_fine_maximum():
    grid = robustness_grid(1.0, (1.0, 1.2, 0.005), (1.2, 1.4, 0.005))
    assert grid.best[2] == pytest.approx(0.2510, abs=5e-4)


def test_robustness_rejects_empty():
    with pytest.raises(ValueError):
        robustness_grid(1.0, [], [1.0])


def test_cinept_is_not_optimizable():
    with pytest.raises(ValueError):
        adjoint_gradient(cinept_program(1.0), ChainParams(1.0))


def test_restart_stability():
    params = ChainParams(1.0)
    finals = [
        grape_optimize(params, random_initial_pulse(params, np.random.default_rng(seed)), max_iters=400).efficiency
        for seed in range(5)
    ]
    assert max(finals) - min(finals) <= 0.003
    assert min(finals) == pytest.approx(0.2512, abs=0.002)
