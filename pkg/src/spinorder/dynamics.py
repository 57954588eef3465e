"""Propagation of the reduced spin-order transfer model.

The reduced model tracks five expectation values ``(z1, x1, y2, x3, z3)``
in time units of ``1/(pi J sqrt(2))``:

    z1 = <2 I1z I2z>,  x1 = <2 I1z I2x>,
    y2 = <sqrt(2) (2 I1z I2y I3z + I2y / 2)>,
    x3 = -<2 I2x I3z>, z3 = <2 I2z I3z>

and evolves linearly under a single control ``omega`` (the normalized
y-field on spin 2) and the normalized transverse relaxation ``xi``.

Also here: the radial r-system of the relaxed three-control problem and the
linear p-system obtained from it by the time change dtau/dt = sum (u_i r_i)^2.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

STATE_LABELS = ("z1", "x1", "y2", "x3", "z3")

# Drift part of the reduced generator with the relaxation diagonal removed.
_COUPLING = np.array(
    [
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, -1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0],
    ]
)
_TRANSVERSE = np.diag([0.0, 1.0, 1.0, 1.0, 0.0])

#: Generator of the control term: rotates (z1 -> x1) and (x3 -> z3).
CONTROL_GENERATOR = np.zeros((5, 5))
CONTROL_GENERATOR[1, 0] = 1.0
CONTROL_GENERATOR[0, 1] = -1.0
CONTROL_GENERATOR[4, 3] = 1.0
CONTROL_GENERATOR[3, 4] = -1.0


@dataclass(frozen=True)
class ChainParams:
    """Normalized relaxation ``xi``, horizon ``T`` and number of segments.

    ``steps`` counts piecewise-constant control segments; the time grid has
    ``steps + 1`` points from 0 to ``horizon``.  Physically
    ``xi = k / (J sqrt 2)`` and time is measured in ``1/(pi J sqrt 2)``.
    """

    xi: float
    horizon: float = 10.0
    steps: int = 1000

    def __post_init__(self):
        if not (self.xi >= 0 and math.isfinite(self.xi)):
            raise ValueError(f"xi must be finite and >= 0, got {self.xi}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be > 0, got {self.horizon}")
        if int(self.steps) != self.steps or self.steps < 2:
            raise ValueError(f"steps must be an integer >= 2, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.steps) + 0.5) * self.dt

    def with_steps(self, steps: int) -> "ChainParams":
        return ChainParams(self.xi, self.horizon, steps)


@dataclass(frozen=True)
class ReducedState:
    z1: float = 0.0
    x1: float = 0.0
    y2: float = 0.0
    x3: float = 0.0
    z3: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.z1, self.x1, self.y2, self.x3, self.z3], dtype=float)

    @classmethod
    def from_array(cls, values) -> "ReducedState":
        return cls(*(float(v) for v in np.asarray(values, dtype=float).reshape(5)))


#: Spin order 2 I1z I2z, the start of every transfer.
INITIAL_STATE = ReducedState(z1=1.0)


def theta3(x3, z3, atol=1e-12):
    """Angle of the (x3, z3) vector with the x axis; 0 where both vanish."""
    x3 = np.asarray(x3, dtype=float)
    z3 = np.asarray(z3, dtype=float)
    angle = np.arctan2(z3, x3)
    return np.where((np.abs(x3) < atol) & (np.abs(z3) < atol), 0.0, angle)


@dataclass
class Trajectory:
    """States of the reduced model on a time grid.

    ``states`` is an ``(len(times), 5)`` array, columns in ``STATE_LABELS``
    order.  At a time carrying a delta rotation the recorded state is the one
    after the rotation.
    """

    times: np.ndarray
    states: np.ndarray
    theta3: np.ndarray = field(init=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.shape != (len(self.times), 5):
            raise ValueError("states must have shape (len(times), 5)")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        self.theta3 = theta3(self.states[:, 3], self.states[:, 4])

    def __len__(self):
        return len(self.times)

    def __getitem__(self, label: str) -> np.ndarray:
        return self.states[:, STATE_LABELS.index(label)]

    def state(self, index: int) -> ReducedState:
        return ReducedState.from_array(self.states[index])

    @property
    def final(self) -> ReducedState:
        return self.state(-1)

    @property
    def efficiency(self) -> float:
        """Transferred spin order z3 at the final time."""
        return float(self.states[-1, 4])

    def to_csv(self, stream=None) -> str:
        """Write ``t,z1,x1,y2,x3,z3,theta3`` rows with 12 significant digits."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("t",) + STATE_LABELS + ("theta3",))
        for t, row, th in zip(self.times, self.states, self.theta3):
            writer.writerow([format_number(v) for v in (t, *row, th)])
        text = buf.getvalue()
        if stream is not None:
            stream.write(text)
        return text


def format_number(value: float) -> str:
    out = f"{float(value):.12g}"
    return "0" if out == "-0" else out


# --------------------------------------------------------------------------
# Generators and exponentials


def reduced_generator(xi: float, omega: float) -> np.ndarray:
    """5x5 generator of the reduced system for a constant control value."""
    if xi < 0:
        raise ValueError("xi must be >= 0")
    return _COUPLING - xi * _TRANSVERSE + omega * CONTROL_GENERATOR


def reduced_generators(xi: float, omegas) -> np.ndarray:
    """Stack of generators, one per entry of ``omegas``."""
    omegas = np.asarray(omegas, dtype=float)
    gens = np.broadcast_to(_COUPLING - xi * _TRANSVERSE, omegas.shape + (5, 5)).copy()
    gens += omegas[..., None, None] * CONTROL_GENERATOR
    return gens


def _taylor_degree(theta: float, eps: float = 1e-17) -> int:
    # smallest m with theta^(m+1) / (m+1)! below eps
    degree, term = 1, theta * theta / 2.0
    while term > eps and degree < 30:
        degree += 1
        term *= theta / (degree + 1)
    return degree


def expm_batch(mats, theta: float = 0.25) -> np.ndarray:
    """Matrix exponential of a stack of small matrices.

    Scaling and squaring with a Taylor kernel: the stack is scaled until
    every 1-norm is at most ``theta`` and the Taylor degree is picked so the
    truncation remainder is below 1e-17 relative.
    """
    mats = np.asarray(mats, dtype=float)
    norm = np.abs(mats).sum(axis=-2).max() if mats.size else 0.0
    squarings = max(0, math.ceil(math.log2(norm / theta))) if norm > theta else 0
    scaled = mats / 2.0**squarings
    degree = _taylor_degree(norm / 2.0**squarings)
    eye = np.broadcast_to(np.eye(mats.shape[-1]), mats.shape)
    result = eye + scaled / degree
    for k in range(degree - 1, 0, -1):
        result = eye + (scaled @ result) / k
    for _ in range(squarings):
        result = result @ result
    return result


def chain_product(mats) -> np.ndarray:
    """Ordered product ``mats[-1] @ ... @ mats[0]`` by pairwise reduction."""
    mats = np.asarray(mats, dtype=float)
    while len(mats) > 1:
        if len(mats) % 2:
            head, rest = mats[0], mats[1:]
            mats = rest[1::2] @ rest[0::2]
            mats[0] = mats[0] @ head
        else:
            mats = mats[1::2] @ mats[0::2]
    return mats[0]


def prefix_products(mats) -> np.ndarray:
    """All ordered products ``out[k] = mats[k] @ ... @ mats[0]`` (parallel scan)."""
    out = np.array(mats, dtype=float)
    shift = 1
    while shift < len(out):
        out[shift:] = out[shift:] @ out[:-shift]
        shift *= 2
    return out


def rotation(angle: float) -> np.ndarray:
    """Exact instantaneous rotation by ``angle`` in the (z1, x1) and (x3, z3) planes."""
    c, s = math.cos(angle), math.sin(angle)
    rot = np.eye(5)
    rot[0, 0] = rot[1, 1] = rot[3, 3] = rot[4, 4] = c
    rot[1, 0] = s
    rot[0, 1] = -s
    rot[4, 3] = s
    rot[3, 4] = -s
    return rot


# --------------------------------------------------------------------------
# Reduced-model propagation


def _segment_plan(pulse, params: ChainParams):
    """Control amplitudes per segment and events keyed by grid/segment position.

    Returns ``(amplitudes, at_start, inside)`` where ``at_start`` lists angles
    applied at t=0 and ``inside[k]`` lists ``(time, angle)`` events in
    ``(t_k, t_{k+1}]``.
    """
    if abs(pulse.horizon - params.horizon) > 1e-12 * max(1.0, params.horizon):
        raise ValueError(
            f"pulse horizon {pulse.horizon} does not match params horizon {params.horizon}"
        )
    amplitudes = pulse.segment_amplitudes(params.steps)
    if amplitudes.shape != (params.steps,):
        raise ValueError(
            f"pulse has {amplitudes.shape[0]} segments, grid has {params.steps}"
        )
    snap = 1e-12 * max(1.0, params.horizon)
    at_start = []
    inside: dict[int, list] = {}
    for t, angle in sorted(pulse.events):
        if t <= snap:
            at_start.append(angle)
            continue
        k = min(params.steps - 1, int(math.ceil((t - snap) / params.dt)) - 1)
        k = max(k, 0)
        t_end = (k + 1) * params.dt
        if abs(t - t_end) <= snap:
            t = t_end
        inside.setdefault(k, []).append((t, angle))
    return amplitudes, at_start, inside


def _propagate(initial, pulse, params, step):
    """Shared driver; ``step(k, omega, h, x)`` advances x over duration h."""
    amplitudes, at_start, inside = _segment_plan(pulse, params)
    x = np.asarray(initial.as_array() if isinstance(initial, ReducedState) else initial, dtype=float)
    if x.shape != (5,) or not np.all(np.isfinite(x)):
        raise ValueError("initial state must be a finite 5-vector")
    for angle in at_start:
        x = rotation(angle) @ x
    states = np.empty((params.steps + 1, 5))
    states[0] = x
    dt = params.dt
    for k in range(params.steps):
        events = inside.get(k)
        if not events:
            x = step(k, amplitudes[k], None, x)
        else:
            t = k * dt
            for t_event, angle in events:
                if t_event > t:
                    x = step(k, amplitudes[k], t_event - t, x)
                    t = t_event
                x = rotation(angle) @ x
            if (k + 1) * dt > t:
                x = step(k, amplitudes[k], (k + 1) * dt - t, x)
        states[k + 1] = x
    return Trajectory(params.times, states)


def propagate_reduced(initial, pulse, params: ChainParams) -> Trajectory:
    """Propagate the reduced system with exact per-segment exponentials.

    ``pulse`` is a :class:`spinorder.pulses.PulseProgram`; its continuous part
    is sampled at segment midpoints and its delta events are applied as exact
    rotations at their (possibly off-grid) times.
    """
    amplitudes = pulse.segment_amplitudes(params.steps)
    props = expm_batch(reduced_generators(params.xi, amplitudes) * params.dt)

    def step(k, omega, h, x):
        if h is None:
            return props[k] @ x
        return expm_batch(reduced_generator(params.xi, omega) * h) @ x

    return _propagate(initial, pulse, params, step)


def propagate_rk4(initial, pulse, params: ChainParams, substeps: int = 10) -> Trajectory:
    """Classical RK4 reference propagator, ``substeps`` per segment."""

    def step(k, omega, h, x):
        h = params.dt if h is None else h
        gen = reduced_generator(params.xi, omega)
        dh = h / substeps
        for _ in range(substeps):
            k1 = gen @ x
            k2 = gen @ (x + 0.5 * dh * k1)
            k3 = gen @ (x + 0.5 * dh * k2)
            k4 = gen @ (x + dh * k3)
            x = x + dh / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        return x

    return _propagate(initial, pulse, params, step)


def final_z3_batch(xi: float, amplitudes, dt: float) -> np.ndarray:
    """Final z3 for a batch of piecewise-constant pulses, vectorized.

    ``amplitudes`` has shape ``(..., steps)``; every pulse starts from
    ``INITIAL_STATE``.  Each segment applies a truncated Taylor series of the
    exponential acting on the state, with sub-stepping so that the generator
    norm times the sub-step stays below 0.25.
    """
    amplitudes = np.asarray(amplitudes, dtype=float)
    bound = dt * (2 * np.abs(amplitudes).max(initial=0.0) + 2 * xi + 2.0)
    sub = max(1, math.ceil(bound / 0.25))
    h = dt / sub
    degree = _taylor_degree(bound / sub)
    shape = amplitudes.shape[:-1]
    z1, x1, y2, x3, z3 = (np.zeros(shape) for _ in range(5))
    z1 += 1.0
    for k in range(amplitudes.shape[-1]):
        w = amplitudes[..., k]
        for _ in range(sub):
            acc = [z1, x1, y2, x3, z3]
            term = acc
            for j in range(1, degree + 1):
                a, b, c, d, e = term
                c_h = h / j
                term = [
                    -w * b * c_h,
                    (w * a - xi * b - c) * c_h,
                    (b - xi * c - d) * c_h,
                    (c - xi * d - w * e) * c_h,
                    w * d * c_h,
                ]
                acc = [p + q for p, q in zip(acc, term)]
            z1, x1, y2, x3, z3 = acc
    return z3


# --------------------------------------------------------------------------
# r-system of the relaxed problem


def r_generator(u, xi: float) -> np.ndarray:
    u1, u2, u3 = u
    return np.array(
        [
            [-xi * u1 * u1, -u1 * u2, 0.0],
            [u1 * u2, -xi * u2 * u2, -u2 * u3],
            [0.0, u2 * u3, -xi * u3 * u3],
        ]
    )


@dataclass
class RTrajectory:
    """Radii ``r`` at grid times and the controls ``u`` used on each step."""

    times: np.ndarray
    r: np.ndarray
    u: np.ndarray

    @property
    def p(self) -> np.ndarray:
        return self.r**2

    @property
    def tau(self) -> np.ndarray:
        """Rescaled time tau(t) = int sum_i (u_i r_i)^2 dt (trapezoid per step)."""
        v_start = (self.u * self.r[:-1]) ** 2
        v_end = (self.u * self.r[1:]) ** 2
        dt = np.diff(self.times)
        inc = 0.5 * dt * (v_start.sum(axis=1) + v_end.sum(axis=1))
        return np.concatenate([[0.0], np.cumsum(inc)])


def propagate_r_system(
    controls,
    xi: float,
    horizon: float,
    steps: int,
    r0: Sequence[float] = (1.0, 0.0, 0.0),
) -> RTrajectory:
    """Integrate the r-system with fixed-step RK4.

    ``controls`` is either an array of shape ``(steps, 3)`` (one constant
    ``u`` per step) or a feedback callable ``controls(t, r) -> u`` evaluated
    at the start of each step.
    """
    dt = horizon / steps
    r = np.asarray(r0, dtype=float).copy()
    feedback = callable(controls)
    if not feedback:
        table = np.asarray(controls, dtype=float)
        if table.ndim != 2 or table.shape[1] != 3 or table.shape[0] < steps:
            raise ValueError("control waveform must have shape (>= steps, 3)")
        if np.any(np.abs(table) > 1 + 1e-12):
            raise ValueError("controls must satisfy |u_i| <= 1")
    rs = np.empty((steps + 1, 3))
    us = np.empty((steps, 3))
    rs[0] = r
    for k in range(steps):
        u = np.asarray(controls(k * dt, r) if feedback else table[k], dtype=float)
        if np.any(np.abs(u) > 1 + 1e-12):
            raise ValueError("controls must satisfy |u_i| <= 1")
        gen = r_generator(u, xi)
        k1 = gen @ r
        k2 = gen @ (r + 0.5 * dt * k1)
        k3 = gen @ (r + 0.5 * dt * k2)
        k4 = gen @ (r + dt * k3)
        r = r + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        rs[k + 1] = r
        us[k] = u
    return RTrajectory(np.linspace(0.0, horizon, steps + 1), rs, us)


def ratio_feedback(ratios: Sequence[float], seed_u=(1.0, 1.0, 1.0)) -> Callable:
    """Feedback holding ``u_i r_i`` proportional to ``ratios``.

    The common scale is the largest one keeping every ``|u_i| <= 1``.  While
    some radius with a nonzero target is still zero the ratios are singular,
    so ``seed_u`` is returned instead.
    """
    target = np.asarray(ratios, dtype=float)

    def control(t, r):
        r = np.asarray(r, dtype=float)
        active = target != 0
        if np.any(r[active] <= 0):
            return np.asarray(seed_u, dtype=float)
        scale = np.min(r[active] / np.abs(target[active]))
        u = np.zeros(3)
        u[active] = scale * target[active] / r[active]
        return np.clip(u, -1.0, 1.0)

    return control


# --------------------------------------------------------------------------
# p-system


def p_matrix(xi: float) -> np.ndarray:
    """A = 2 [[-xi, -1, 0], [1, -xi, -1], [0, 1, -xi]]."""
    return 2.0 * np.array([[-xi, -1.0, 0.0], [1.0, -xi, -1.0], [0.0, 1.0, -xi]])


def p_rates(m, xi: float) -> np.ndarray:
    """dp/dtau = diag(A m m^T) for a direction ``m``."""
    m = np.asarray(m, dtype=float)
    return (p_matrix(xi) @ m) * m


@dataclass(frozen=True)
class PVector:
    p1: float
    p2: float
    p3: float
    m: tuple = (1.0, 0.0, 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.p1, self.p2, self.p3])


def exhaust_p1(p, m, xi: float) -> np.ndarray:
    """Continue the p-system from ``p`` along constant ``m`` until p1 = 0.

    Used to extrapolate a ratio-tracking r-system run to t -> infinity: once
    the products u_i r_i stay proportional to ``m`` the motion is linear in
    tau, so the end point follows without integrating the slow tail.
    """
    m = np.asarray(m, dtype=float)
    m = m / np.linalg.norm(m)
    rates = p_rates(m, xi)
    if not rates[0] < 0:
        raise ValueError("p1 rate is not negative; the transfer never completes")
    p = np.asarray(p, dtype=float)
    out = p + (p[0] / -rates[0]) * rates
    out[0] = 0.0
    return out


def propagate_p_linear(m, xi: float) -> tuple[float, PVector]:
    """Run the p-system with a constant direction until p1 is exhausted.

    Starting from p = (1, 0, 0) the motion is linear in tau, so the stopping
    time is ``1 / (-rate_1)``.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3,) or abs(np.linalg.norm(m) - 1.0) > 1e-12:
        raise ValueError("m must be a unit 3-vector")
    rates = p_rates(m, xi)
    if not rates[0] < 0:
        raise ValueError("p1 rate is not negative; the transfer never completes")
    tau_stop = -1.0 / rates[0]
    p = np.array([1.0, 0.0, 0.0]) + tau_stop * rates
    p[0] = 0.0
    return tau_stop, PVector(float(p[0]), float(p[1]), float(p[2]), tuple(m))
