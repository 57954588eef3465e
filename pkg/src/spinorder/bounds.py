"""Closed-form baselines and the relaxed-problem upper bound.

``kappa(xi)`` is the largest z3 reachable in the relaxed problem where
z1 -> x1, y2 -> z2 and x3 -> z3 can be rotated independently; it is
therefore an upper bound for the single-control system.  The CINEPT
efficiency is what two hard pi/2 pulses around a free evolution achieve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import p_rates, propagate_p_linear


class BoundViolation(RuntimeError):
    """A random control sequence beat the claimed upper bound."""


def _check_xi(xi):
    if not xi >= 0:
        raise ValueError(f"xi must be >= 0, got {xi}")


def kappa(xi: float) -> float:
    """Upper bound (sqrt(xi^2 + 2) - xi)^2 / 2 on the transfer efficiency.

    Evaluated as ``1 / (1 + xi^2 + xi sqrt(xi^2 + 2))``, which is the same
    number without the cancellation of the difference form at large xi.
    """
    _check_xi(xi)
    return 1.0 / (1.0 + xi * xi + xi * math.sqrt(xi * xi + 2.0))


def cinept_time(xi: float) -> float:
    """First maximum t_m = sqrt(2) acot(xi / sqrt(2)) of exp(-xi t) sin^2(t / sqrt 2)."""
    _check_xi(xi)
    # acot on (0, pi/2] for nonnegative arguments
    return math.sqrt(2.0) * math.atan2(1.0, xi / math.sqrt(2.0))


def cinept_efficiency(xi: float) -> float:
    """Efficiency of the hard-pulse CINEPT sequence."""
    _check_xi(xi)
    angle = math.atan2(1.0, xi / math.sqrt(2.0))
    return math.exp(-xi * math.sqrt(2.0) * angle) * math.sin(angle) ** 2


def optimal_ratios(xi: float) -> tuple[float, float]:
    """Bound-attaining ratios ``(u2 r2 / u1 r1, u3 r3 / u1 r1)``.

    The first is ``(1 - kappa) / xi``; its xi -> 0 limit is sqrt(2).
    """
    k = kappa(xi)
    if xi == 0:
        return math.sqrt(2.0), k
    return (1.0 - k) / xi, k


def optimal_direction(xi: float) -> np.ndarray:
    """Unit direction m proportional to (1, (1 - kappa)/xi, kappa)."""
    c, k = optimal_ratios(xi)
    m = np.array([1.0, c, k])
    return m / np.linalg.norm(m)


@dataclass(frozen=True)
class BoundReport:
    xi: float
    kappa: float
    eta_ci: float
    t_m: float
    ratios: tuple[float, float]

    def as_dict(self) -> dict:
        return {"xi": self.xi, "kappa": self.kappa, "eta_ci": self.eta_ci, "t_m": self.t_m}


def bound_report(xi: float) -> BoundReport:
    return BoundReport(
        xi=float(xi),
        kappa=kappa(xi),
        eta_ci=cinept_efficiency(xi),
        t_m=cinept_time(xi),
        ratios=optimal_ratios(xi),
    )


# --------------------------------------------------------------------------
# Held-ratio (r1, r3) system


def held_ratio_yield(xi: float, ratio: float) -> float:
    """Final p3 per unit p1 when u3 r3 / u1 r1 is held at ``ratio``.

    With u2 r2 eliminated through dr2/dt = 0 the (r1, r3) system has
    d(r3^2) / -d(r1^2) = ratio (1 - (1 + xi^2) ratio) / ((1 + xi^2) - ratio),
    a constant, so the final r3 is the square root of this yield.
    """
    if xi <= 0:
        raise ValueError("held-ratio system needs xi > 0")
    a = 1.0 + xi * xi
    return ratio * (1.0 - a * ratio) / (a - ratio)


def two_variable_transfer(
    xi: float, ratio: float, horizon: float = 40.0, steps: int = 20000, seed: float = 1e-3
) -> np.ndarray:
    """Integrate the (r1, r3) system with u3 r3 = ratio * u1 r1 by RK4.

    Returns the r3 trajectory.  The controls saturate whichever of u1, u3
    must be largest.  r3 = 0 makes the ratio singular on the first step,
    which is seeded with u3 = 1 and a small ``u1 = seed``.
    """
    if xi <= 0:
        raise ValueError("held-ratio system needs xi > 0")
    a = xi + 1.0 / xi
    dt = horizon / steps
    r = np.array([1.0, 0.0])

    def rhs(r, u1, u3):
        return np.array(
            [
                -a * u1 * u1 * r[0] + u1 * u3 * r[1] / xi,
                u1 * u3 * r[0] / xi - a * u3 * u3 * r[1],
            ]
        )

    r3 = np.empty(steps + 1)
    r3[0] = 0.0
    for k in range(steps):
        if k == 0 or r[1] <= 0:
            u1, u3 = seed, 1.0
        elif r[1] >= ratio * r[0]:
            u1, u3 = 1.0, ratio * r[0] / r[1]
        else:
            u1, u3 = r[1] / (ratio * r[0]), 1.0
        k1 = rhs(r, u1, u3)
        k2 = rhs(r + 0.5 * dt * k1, u1, u3)
        k3 = rhs(r + 0.5 * dt * k2, u1, u3)
        k4 = rhs(r + dt * k3, u1, u3)
        r = r + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        r3[k + 1] = r[1]
    return r3


# --------------------------------------------------------------------------
# Certification


@dataclass(frozen=True)
class Certificate:
    xi: float
    kappa: float
    attained_p3: float
    p2_rate: float
    tau_stop: float
    trials: int
    max_random_p3: float
    completed_trials: int


def random_p_trial(xi: float, rng: np.random.Generator, segments: int = 64) -> tuple[float, bool]:
    """Largest p3 seen along one random piecewise-constant direction sequence.

    Each segment draws m uniformly on the sphere and runs for a uniform
    fraction of the time until the first decreasing p_i would hit zero.
    Fractions above 0.9 are rounded up to the full limit so that
    coordinates actually get exhausted.  Returns (max p3, whether p1
    reached 1e-9).
    """
    p = np.array([1.0, 0.0, 0.0])
    best = 0.0
    done = False
    for _ in range(segments):
        m = rng.normal(size=3)
        m /= np.linalg.norm(m)
        rates = p_rates(m, xi)
        falling = rates < 0
        if not np.any(falling):
            continue
        limits = -p[falling] / rates[falling]
        hit = np.min(limits)
        frac = rng.uniform(0.0, 1.0)
        if frac > 0.9:
            frac = 1.0
        tau = frac * hit
        p = p + tau * rates
        if frac == 1.0:
            idx = np.flatnonzero(falling)[np.argmin(limits)]
            p[idx] = 0.0
        p = np.maximum(p, 0.0)
        best = max(best, p[2])
        if p[0] <= 1e-9:
            done = True
    return best, done


def certify_bound(
    xi: float,
    trials: int = 1000,
    tolerance: float = 1e-6,
    segments: int = 64,
    seed: int = 0,
) -> Certificate:
    """Check that kappa^2 is attained in p and never exceeded by random controls.

    Raises :class:`BoundViolation` if any trial ends above ``kappa^2 + tolerance``.
    """
    _check_xi(xi)
    if trials < 100:
        raise ValueError("use at least 100 trials")
    k = kappa(xi)
    m = optimal_direction(xi)
    tau_stop, pv = propagate_p_linear(m, xi)
    p2_rate = float(p_rates(m, xi)[1])
    rng = np.random.default_rng(seed)
    best = 0.0
    completed = 0
    for _ in range(trials):
        p3, done = random_p_trial(xi, rng, segments)
        completed += done
        if p3 > k * k + tolerance:
            raise BoundViolation(
                f"xi={xi}: random control reached p3={p3!r} > kappa^2={k * k!r}"
            )
        best = max(best, p3)
    return Certificate(
        xi=float(xi),
        kappa=k,
        attained_p3=pv.p3,
        p2_rate=p2_rate,
        tau_stop=tau_stop,
        trials=trials,
        max_random_p3=best,
        completed_trials=completed,
    )
