"""Log-domain first-order low-pass filters (DPI, LPF, Tau-Cell).

These current-mode subthreshold circuits share one dynamical core. In
normalized form the full filter obeys the nonlinear ODE

    tau * (1 + i_th/i_out) * di_out/dt + i_out = i_th*i_in/i_tau - i_th

which for large input currents (i_in >> i_tau) and large output currents
(i_out >> i_th) reduces to the linear kernel

    tau * di_out/dt + i_out = g * i_in

with a variant-dependent gain g and time constant tau:

    variant    g              tau
    DPI        i_th / i_tau   c_cap*u_t / (kappa*i_tau)
    LPF        i_0  / i_tau   c_cap*u_t / (kappa*i_tau)
    Tau-Cell   1              c_cap*u_t / i_tau

All dynamics are computed in SI units (Amperes, seconds). Bias voltages
enter only through :func:`bias_to_current`, which applies the subthreshold
exponential law i = i_0 * exp(kappa*v/u_t).

Every stepping function accepts scalars or numpy arrays for the state and
input, so a bank of identical-parameter filters can be advanced in one
call.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

# Relative floor applied to the nonlinear state: the physical circuit never
# reaches exactly zero output current, and the 1/i_out term of the full ODE
# is singular there.
FLOOR_RATIO = 1e-3


class FilterVariant(enum.Enum):
    DPI = "dpi"
    LPF = "lpf"
    TAU_CELL = "tau_cell"


class ConvergenceError(RuntimeError):
    """Raised when an adaptive integration fails to meet its tolerance."""


@dataclass(frozen=True)
class FilterParams:
    """Normalized parameters of one log-domain filter.

    c_cap:  capacitance (F)
    u_t:    thermal voltage (V)
    kappa:  subthreshold slope factor
    i_tau:  leak reference current (A), sets the time constant
    i_th:   gain reference current (A), sets the DPI gain
    i_0:    dark current (A), scale of bias-voltage conversion
    """

    c_cap: float = 1e-12
    u_t: float = 0.025
    kappa: float = 0.7
    i_tau: float = 5e-12
    i_th: float = 5e-12
    i_0: float = 5e-16

    def __post_init__(self):
        if not (self.c_cap > 0 and self.u_t > 0):
            raise ValueError("c_cap and u_t must be positive")
        if not (0.0 < self.kappa <= 1.0):
            raise ValueError("kappa must lie in (0, 1]")
        for name in ("i_tau", "i_th", "i_0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def i_floor(self) -> float:
        return FLOOR_RATIO * self.i_tau

    def with_tau(self, tau: float, variant: FilterVariant = FilterVariant.DPI) -> "FilterParams":
        """Return a copy whose capacitance realizes the requested tau."""
        if tau <= 0:
            raise ValueError("tau must be positive")
        kappa = 1.0 if variant is FilterVariant.TAU_CELL else self.kappa
        return replace(self, c_cap=tau * kappa * self.i_tau / self.u_t)


@dataclass
class FilterState:
    """Output current of one filter plus the time it was last advanced."""

    i_out: float = 0.0
    t_last: float = 0.0


def tau_of(params: FilterParams, variant: FilterVariant = FilterVariant.DPI) -> float:
    """Time constant of the filter: c*u_t/(kappa*i_tau), kappa-free for Tau-Cell."""
    if variant is FilterVariant.TAU_CELL:
        return params.c_cap * params.u_t / params.i_tau
    return params.c_cap * params.u_t / (params.kappa * params.i_tau)


def gain_of(params: FilterParams, variant: FilterVariant = FilterVariant.DPI) -> float:
    """Steady-state gain of the linear kernel."""
    if variant is FilterVariant.DPI:
        return params.i_th / params.i_tau
    if variant is FilterVariant.LPF:
        return params.i_0 / params.i_tau
    return 1.0


def steady_state(i_in, params: FilterParams, variant: FilterVariant = FilterVariant.DPI):
    """Fixed point of the linear kernel for constant input: g * i_in."""
    return gain_of(params, variant) * np.asarray(i_in, dtype=float)


def nonlinear_steady_state(i_in, params: FilterParams):
    """Fixed point of the full nonlinear ODE: i_th*(i_in - i_tau)/i_tau.

    Negative values mean the state relaxes to the numerical floor.
    """
    return params.i_th * (np.asarray(i_in, dtype=float) - params.i_tau) / params.i_tau


def bias_to_current(v_bias, params: FilterParams):
    """Subthreshold bias-voltage to current conversion: i_0*exp(kappa*v/u_t).

    Raises ValueError when the exponent would overflow a double; such a
    bias is outside any physically meaningful range.
    """
    exponent = params.kappa * np.asarray(v_bias, dtype=float) / params.u_t
    if np.any(exponent > 700.0):
        raise ValueError("bias voltage out of range (exponential overflow)")
    return params.i_0 * np.exp(exponent)


def advance_linear(i_out, i_in, dt: float, tau: float, gain: float):
    """Exact exponential update of the linear kernel (array-friendly core)."""
    target = gain * np.asarray(i_in, dtype=float)
    decay = math.exp(-dt / tau)
    return target + (np.asarray(i_out, dtype=float) - target) * decay


def step_linear(
    state: FilterState,
    i_in,
    dt: float,
    params: FilterParams,
    variant: FilterVariant = FilterVariant.DPI,
) -> FilterState:
    """Advance the linear kernel by dt under constant input.

    Uses the exact exponential solution, so composing steps of dt1 and dt2
    equals one step of dt1+dt2 to rounding precision.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    i_new = advance_linear(state.i_out, i_in, dt, tau_of(params, variant),
                           gain_of(params, variant))
    return FilterState(i_out=_restore_shape(i_new), t_last=state.t_last + dt)


def _restore_shape(x):
    return float(x) if np.ndim(x) == 0 else x


def _time_integral(i, s, tau: float, i_th: float):
    """Antiderivative G(i) of dt/di for the full filter ODE.

    The ODE di/dt = (s - i)*i / (tau*(i + i_th)) is separable; partial
    fractions give G(i) = tau*[(i_th/s)*ln(i) - (1 + i_th/s)*ln|s - i|]
    with the degenerate s = 0 form G(i) = -tau*(ln(i) - i_th/i). G is
    monotone along the motion (G' = 1/(di/dt)), so elapsed time between
    two states on the same side of the fixed point is G(i1) - G(i0).
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        general = tau * ((i_th / s) * np.log(i) - (1.0 + i_th / s) * np.log(np.abs(s - i)))
        degenerate = -tau * (np.log(i) - i_th / i)
        return np.where(s == 0.0, degenerate, general)


def advance_nonlinear(i_out, i_in, dt: float, params: FilterParams):
    """Exact update of the full ODE under constant input (array core).

    The state moves monotonically toward the fixed point (floored), never
    crossing it, so the implicit solution G(i1) = G(i0) + dt is inverted
    by bisection on ln(i) between the state and its attractor. This is
    exact for constant input at any step size; no substepping is needed.
    """
    tau = tau_of(params, FilterVariant.DPI)
    i_th = params.i_th
    floor = params.i_floor
    i0 = np.maximum(np.asarray(i_out, dtype=float), floor)
    s = np.asarray(nonlinear_steady_state(i_in, params), dtype=float)
    i0, s = np.broadcast_arrays(i0, s)
    i0 = np.array(i0, dtype=float)
    s = np.array(s, dtype=float)
    attractor = np.maximum(s, floor)

    moving = np.abs(attractor - i0) > 0.0
    if not np.any(moving):
        return i0 if np.ndim(i_out) or np.ndim(i_in) else float(i0)

    g0 = _time_integral(i0, s, tau, i_th)
    target = g0 + dt
    # finite-time arrival: reaching a floored attractor takes finite time
    # (approach to the true fixed point s is asymptotic, G -> +inf there)
    g_end = _time_integral(attractor, s, tau, i_th)
    arrived = moving & (g_end <= target)

    a = np.log(i0)
    b = np.log(attractor)
    active = moving & ~arrived
    for _ in range(100):
        m = 0.5 * (a + b)
        gm = _time_integral(np.exp(m), s, tau, i_th)
        hit = gm >= target
        b = np.where(active & hit, m, b)
        a = np.where(active & ~hit, m, a)
    result = np.exp(0.5 * (a + b))
    result = np.where(arrived, attractor, result)
    result = np.where(moving, result, i0)
    return np.maximum(result, floor)


def step_nonlinear(state: FilterState, i_in, dt: float, params: FilterParams) -> FilterState:
    """Advance the full nonlinear ODE by dt under constant input.

    Exact implicit solution (see advance_nonlinear); the state is floored
    at FLOOR_RATIO*i_tau before stepping (the ODE is singular at zero).
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if np.any(np.asarray(i_in) < 0):
        raise ValueError("i_in must be non-negative")
    if dt == 0:
        return FilterState(i_out=state.i_out, t_last=state.t_last)
    i_new = advance_nonlinear(state.i_out, i_in, dt, params)
    return FilterState(i_out=_restore_shape(i_new), t_last=state.t_last + dt)
