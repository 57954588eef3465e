"""Control waveforms for the spin-2 y-field.

Three kinds of :class:`PulseProgram`:

* ``piecewise``: one amplitude per grid segment,
* ``gaussian``: ``A exp(-((t - T/2) / (sqrt(2) sigma))^2)`` truncated to [0, T],
* ``deltas``: zero field plus instantaneous rotations ``(time, angle)``.

Amplitudes are normalized, ``Omega = omega_y / (pi J sqrt 2)``.

Note on the Gaussian: the bell-shaped pulses need a negative exponent.  The
formula is sometimes printed without the minus sign; taken literally that
grows without bound away from T/2, so it is read as a typo here.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bounds import cinept_time
from .dynamics import format_number

KINDS = ("piecewise", "gaussian", "deltas")


def gaussian_sample(A, sigma, T, t):
    """Gaussian envelope centred at T/2; works on scalars and arrays."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return A * np.exp(-(((np.asarray(t, dtype=float) - T / 2.0) / (math.sqrt(2.0) * sigma)) ** 2))


@dataclass(frozen=True)
class PulseProgram:
    kind: str
    horizon: float
    samples: np.ndarray | None = None
    amplitude: float | None = None
    sigma: float | None = None
    events: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown pulse kind {self.kind!r}")
        if not self.horizon > 0:
            raise ValueError("horizon must be > 0")
        if self.kind == "piecewise":
            samples = np.array(self.samples, dtype=float)
            if samples.ndim != 1 or len(samples) < 1:
                raise ValueError("piecewise pulse needs a 1-D sample array")
            samples.setflags(write=False)
            object.__setattr__(self, "samples", samples)
        if self.kind == "gaussian":
            if self.amplitude is None or self.sigma is None:
                raise ValueError("gaussian pulse needs amplitude and sigma")
            if not self.sigma > 0:
                raise ValueError(f"sigma must be > 0, got {self.sigma}")
        events = tuple(sorted((float(t), float(a)) for t, a in self.events))
        for t, _ in events:
            if not 0.0 <= t <= self.horizon:
                raise ValueError(f"event time {t} outside [0, {self.horizon}]")
        object.__setattr__(self, "events", events)

    @classmethod
    def piecewise(cls, samples, horizon: float) -> "PulseProgram":
        return cls("piecewise", horizon, samples=samples)

    @classmethod
    def gaussian(cls, amplitude: float, sigma: float, horizon: float = 10.0) -> "PulseProgram":
        return cls("gaussian", horizon, amplitude=float(amplitude), sigma=float(sigma))

    @classmethod
    def deltas(cls, events, horizon: float) -> "PulseProgram":
        return cls("deltas", horizon, events=tuple(events))

    @classmethod
    def zero(cls, horizon: float = 10.0) -> "PulseProgram":
        return cls("deltas", horizon)

    @property
    def steps(self) -> int | None:
        return len(self.samples) if self.kind == "piecewise" else None

    def segment_amplitudes(self, steps: int) -> np.ndarray:
        """Midpoint amplitudes of the continuous part on a ``steps`` grid."""
        if self.kind == "piecewise":
            if len(self.samples) != steps:
                raise ValueError(
                    f"pulse has {len(self.samples)} samples, grid has {steps} segments"
                )
            return np.asarray(self.samples, dtype=float)
        if self.kind == "gaussian":
            mid = (np.arange(steps) + 0.5) * (self.horizon / steps)
            return gaussian_sample(self.amplitude, self.sigma, self.horizon, mid)
        return np.zeros(steps)

    def __eq__(self, other):
        if not isinstance(other, PulseProgram):
            return NotImplemented
        same_samples = (self.samples is None and other.samples is None) or (
            self.samples is not None
            and other.samples is not None
            and np.array_equal(self.samples, other.samples)
        )
        return (
            self.kind == other.kind
            and self.horizon == other.horizon
            and same_samples
            and self.amplitude == other.amplitude
            and self.sigma == other.sigma
            and self.events == other.events
        )

    __hash__ = None


def cinept_program(xi: float, T: float = 10.0) -> PulseProgram:
    """pi/2 at t=0, free evolution until t_m, pi/2 at t_m."""
    t_m = cinept_time(xi)
    if T < t_m:
        raise ValueError(f"horizon {T} shorter than CINEPT delay {t_m}")
    return PulseProgram.deltas([(0.0, math.pi / 2), (t_m, math.pi / 2)], T)


def discretize(pulse: PulseProgram, steps: int) -> PulseProgram:
    """Piecewise version sampled at segment midpoints; delta events are kept."""
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if pulse.kind == "piecewise" and len(pulse.samples) == steps:
        return pulse
    if pulse.kind == "piecewise":
        # resample the step function at the new midpoints
        old = len(pulse.samples)
        mid = (np.arange(steps) + 0.5) * (pulse.horizon / steps)
        idx = np.minimum((mid / (pulse.horizon / old)).astype(int), old - 1)
        samples = pulse.samples[idx]
    else:
        samples = pulse.segment_amplitudes(steps)
    return PulseProgram("piecewise", pulse.horizon, samples=samples, events=pulse.events)


def pulse_area(pulse: PulseProgram, steps: int = 100000) -> float:
    """Integral of the continuous amplitude over [0, T] (midpoint rule)."""
    return float(pulse.segment_amplitudes(steps).sum() * pulse.horizon / steps)


def gaussian_area(A: float, sigma: float) -> float:
    """Area of the untruncated Gaussian, A sigma sqrt(2 pi)."""
    return A * sigma * math.sqrt(2.0 * math.pi)


# --------------------------------------------------------------------------
# Files


def pulse_to_csv(pulse: PulseProgram) -> str:
    """``t,omega`` rows at segment midpoints, 12 significant digits."""
    if pulse.kind != "piecewise":
        raise ValueError("CSV format is for piecewise pulses")
    if pulse.events:
        raise ValueError("CSV format cannot carry delta events")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("t", "omega"))
    dt = pulse.horizon / len(pulse.samples)
    for k, w in enumerate(pulse.samples):
        writer.writerow((format_number((k + 0.5) * dt), format_number(w)))
    return buf.getvalue()


def pulse_from_csv(text: str) -> PulseProgram:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["t", "omega"]:
        raise ValueError("pulse CSV must start with header 't,omega'")
    data = np.array([[float(c) for c in row] for row in rows[1:] if row], dtype=float)
    if data.ndim != 2 or len(data) < 2:
        raise ValueError("pulse CSV needs at least two samples")
    # midpoints: t_k = (k + 1/2) dt
    horizon = float(format_number(2.0 * data[0, 0] * len(data)))
    return PulseProgram.piecewise(data[:, 1], horizon)


def pulse_to_json(pulse: PulseProgram) -> str:
    if pulse.kind == "gaussian":
        payload = {"A": pulse.amplitude, "sigma": pulse.sigma, "T": pulse.horizon}
    elif pulse.kind == "deltas":
        payload = {"events": [list(e) for e in pulse.events], "T": pulse.horizon}
    else:
        raise ValueError("piecewise pulses are written as CSV")
    return json.dumps(payload)


def pulse_from_json(text: str) -> PulseProgram:
    payload = json.loads(text)
    if "events" in payload:
        return PulseProgram.deltas([tuple(e) for e in payload["events"]], float(payload["T"]))
    return PulseProgram.gaussian(float(payload["A"]), float(payload["sigma"]), float(payload["T"]))


def write_pulse(pulse: PulseProgram, path) -> Path:
    path = Path(path)
    text = pulse_to_csv(pulse) if pulse.kind == "piecewise" else pulse_to_json(pulse) + "\n"
    path.write_text(text)
    return path


def read_pulse(path) -> PulseProgram:
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("{"):
        return pulse_from_json(text)
    return pulse_from_csv(text)


def random_pulse(rng: np.random.Generator, steps: int, horizon: float = 10.0, amplitude: float = 1.5) -> PulseProgram:
    """Piecewise pulse with amplitudes uniform in [-amplitude, amplitude]."""
    return PulseProgram.piecewise(rng.uniform(-amplitude, amplitude, size=steps), horizon)
