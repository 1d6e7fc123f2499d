"""Fixed-step explicit ODE integration for scalar dynamics.

The Gompertz growth law and its closed-form solution live here too: the
exact solution is the oracle every solver test is measured against.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GompertzParams",
    "Trajectory",
    "DivergenceError",
    "gompertz_rhs",
    "gompertz_exact",
    "rk4_step",
    "solve_fixed_grid",
    "integrate_rk4",
    "eval_at",
    "write_trajectory_csv",
]


@dataclass(frozen=True)
class GompertzParams:
    """Gompertz growth law dV/dt = a * V * ln(K / V).

    a is the intrinsic growth rate (1 / time unit of the integration
    variable), K the carrying capacity in the units of the state. Both are
    interpreted in whatever unit system the state is solved in.
    """

    a: float
    K: float

    def __post_init__(self):
        if not (self.a > 0 and self.K > 0):
            raise ValueError(f"Gompertz parameters must be positive, got a={self.a}, K={self.K}")


@dataclass(frozen=True)
class Trajectory:
    """Solution nodes of one integration; immutable after construction."""

    times: np.ndarray
    states: np.ndarray
    clamp_events: int = 0  # times the state had to be floored before a log

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "states", np.asarray(self.states, dtype=float))
        if self.times.shape != self.states.shape:
            raise ValueError("times and states must have equal length")
        if not np.all(np.diff(self.times) > 0):
            raise ValueError("trajectory times must be strictly increasing")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("trajectory states must be finite")

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])


class DivergenceError(ArithmeticError):
    """Raised when the integrated state turns non-finite."""

    def __init__(self, step: int, t: float):
        self.step = step
        self.t = t
        super().__init__(f"non-finite state at step {step} (t={t:g})")


def gompertz_rhs(V: float, p: GompertzParams) -> float:
    """a * V * ln(K / V); requires V > 0."""
    if V <= 0:
        raise ValueError(f"Gompertz rhs requires V > 0, got V={V}")
    return p.a * V * math.log(p.K / V)


def gompertz_exact(t, V0: float, p: GompertzParams):
    """Closed-form solution K * exp(ln(V0/K) * exp(-a t)); vectorized in t."""
    if V0 <= 0:
        raise ValueError(f"initial state must be positive, got V0={V0}")
    return p.K * np.exp(np.log(V0 / p.K) * np.exp(-p.a * np.asarray(t, dtype=float)))


def rk4_step(f, t, y, h):
    """One classical 4th-order Runge-Kutta step for dy/dt = f(t, y).

    Operand-generic: y may be a float or an autodiff Var, so the solver
    used for evaluation and the solver unrolled inside training losses are
    literally the same arithmetic.
    """
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + (0.5 * h) * k1)
    k3 = f(t + 0.5 * h, y + (0.5 * h) * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def solve_fixed_grid(f, v0: float, t0: float, t1: float, n_steps: int) -> Trajectory:
    """Integrate dv/dt = f(t, v) over [t0, t1] with n_steps RK4 steps."""
    if int(n_steps) != n_steps or n_steps < 1:
        raise ValueError(f"n_steps must be a positive integer, got {n_steps}")
    if not t1 > t0:
        raise ValueError(f"need t1 > t0, got [{t0}, {t1}]")
    n_steps = int(n_steps)
    h = (t1 - t0) / n_steps
    times = np.linspace(t0, t1, n_steps + 1)
    states = np.empty(n_steps + 1)
    v = float(v0)
    states[0] = v
    for i in range(n_steps):
        v = rk4_step(f, times[i], v, h)
        if not math.isfinite(v):
            raise DivergenceError(step=i + 1, t=times[i + 1])
        states[i + 1] = v
    return Trajectory(times, states)


def integrate_rk4(rhs, V0: float, t0: float, t1: float, n_steps: int) -> Trajectory:
    """Fixed-step RK4 for an autonomous scalar field dV/dt = rhs(V)."""
    return solve_fixed_grid(lambda t, v: rhs(v), V0, t0, t1, n_steps)


def eval_at(trajectory: Trajectory, t: float) -> float:
    """Linear interpolation between the bracketing solution nodes."""
    lo, hi = trajectory.span
    if t < lo or t > hi:
        raise ValueError(f"t={t} outside trajectory span [{lo}, {hi}]")
    return float(np.interp(t, trajectory.times, trajectory.states))


def write_trajectory_csv(trajectory: Trajectory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "state"])
        for t, s in zip(trajectory.times, trajectory.states):
            writer.writerow([repr(float(t)), repr(float(s))])
