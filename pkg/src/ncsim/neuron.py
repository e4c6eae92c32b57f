"""Generalized adaptive integrate-and-fire neuron.

The soma is a log-domain filter in the membrane current i_mem with an
exponential positive-feedback term and a slow adaptation current i_ahp
produced by a second filter that integrates the neuron's own spikes:

  full mode:
    (1 + i_th/i_mem) * tau * di_mem/dt + i_mem * (1 + i_ahp/i_tau)
        = g_mem*(i_in - i_ahp - i_tau) + f(i_mem)
    tau_ahp * di_ahp/dt + i_ahp = g_ahp * i_ca_pulse * u(t)

  reduced mode (valid for i_in >> i_tau, i_mem >> i_th, i_ahp ignored):
    tau * di_mem/dt + i_mem = g_mem*i_in + (i_a/i_tau)*i_mem

with positive feedback f(i_mem) = (i_a/i_tau)*(i_mem + i_th) and
i_a = fb_i_a0 * exp(min(i_mem, i_spk)/fb_i_delta); the exponential is
saturated at the spike threshold since beyond it a spike is imminent.

u(t) is 1 inside a rectangular window of width t_pulse after each spike.
A spike is detected when i_mem >= i_spk; the membrane is then reset to
i_reset and pinned there for the refractory period t_ref.

State updates accept scalar or array i_mem/i_ahp, so populations with
shared parameters can be advanced in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .logdomain import ConvergenceError

try:  # compiled stepper; the pure-python twin below is the fallback
    from . import _membrane_kernel
except ImportError:  # pragma: no cover
    _membrane_kernel = None

SUBSTEP_RTOL = 1e-4

# State ceiling just above the spike threshold: the runaway beyond it is
# treated as instantaneous, so integrating it precisely buys nothing.
_CLIP_RATIO = 2.0
_MAX_HALVINGS_NEURON = 12
_MAX_SLICES = 100000
# Slice sizing for the adaptive stepper, in ln(i_mem) units: a slice may
# span at most _X_BIG e-folds, shrinking where the log-rate varies quickly
# (relative rate variation bounded near _X_REL per slice). All slice
# budgets shrink with the refinement rung n, so successive rungs genuinely
# refine each other.
_X_BIG = 8.0
_X_MIN = 1e-3
_X_REL = 0.25
# Ladder depth after which a threshold-crossing disagreement is accepted:
# whether the runaway fires within this step or the next is a knife edge
# that refinement cannot pin; the spike-time error is below one step.
_KNIFE_MIN_N = 32


@dataclass(frozen=True)
class NeuronParams:
    """Soma parameters. Currents in A, times in s.

    The adaptation branch is parameterized by its time constant tau_ahp and
    gain g_ahp only; the underlying reference currents are not individually
    observable in the model.
    """

    tau_mem: float = 0.020
    i_tau: float = 5e-12
    i_th: float = 50e-12
    fb_i_a0: float = 0.0
    fb_i_delta: Optional[float] = None  # defaults to i_spk/10
    i_spk: Optional[float] = None       # defaults to 100*i_th
    i_reset: float = 0.0
    t_ref: float = 0.002
    tau_ahp: float = 0.100
    g_ahp: float = 0.0
    i_ca_pulse: float = 0.0
    t_pulse: float = 0.001
    reduced: bool = False

    def __post_init__(self):
        if self.i_spk is None:
            object.__setattr__(self, "i_spk", 100.0 * self.i_th)
        if self.fb_i_delta is None:
            object.__setattr__(self, "fb_i_delta", self.i_spk / 10.0)
        if not (self.tau_mem > 0 and self.tau_ahp > 0):
            raise ValueError("time constants must be positive")
        if not (self.i_tau > 0 and self.i_th > 0):
            raise ValueError("reference currents must be positive")
        if not self.i_spk > self.i_reset >= 0:
            raise ValueError("need i_spk > i_reset >= 0")
        if self.t_ref < 0 or self.t_pulse < 0:
            raise ValueError("t_ref and t_pulse must be non-negative")
        if not self.fb_i_delta > 0:
            raise ValueError("fb_i_delta must be positive")
        if self.fb_i_a0 < 0 or self.g_ahp < 0 or self.i_ca_pulse < 0:
            raise ValueError("feedback and adaptation scales must be non-negative")

    @property
    def g_mem(self) -> float:
        """Membrane DPI gain i_th/i_tau."""
        return self.i_th / self.i_tau

    @property
    def i_floor(self) -> float:
        return 1e-3 * self.i_tau

    @property
    def i_rest(self) -> float:
        """Membrane current the reset pins to (reset target floored)."""
        return max(self.i_reset, self.i_floor)


@dataclass
class NeuronState:
    """Per-neuron dynamic state; `t` is the neuron's local clock."""

    i_mem: float = 0.0
    i_ahp: float = 0.0
    t: float = 0.0
    refractory_until: float = 0.0
    last_spike_time: Optional[float] = None


def feedback_current(i_mem, params: NeuronParams):
    """Positive-feedback current f(i_mem) = (i_a/i_tau)*(i_mem + i_th).

    i_a grows exponentially with i_mem and saturates at the spike
    threshold, where the upswing is treated as instantaneous anyway.
    """
    i = np.asarray(i_mem, dtype=float)
    if np.any(i < 0):
        raise ValueError("i_mem must be non-negative")
    i_a = params.fb_i_a0 * np.exp(np.minimum(i, params.i_spk) / params.fb_i_delta)
    return (i_a / params.i_tau) * (i + params.i_th)


def _log_rate_full(i, drive, i_ahp, p: NeuronParams):
    """d ln(i_mem)/dt of the full equation; finite for i -> 0."""
    i_a = p.fb_i_a0 * np.exp(np.minimum(i, p.i_spk) / p.fb_i_delta)
    target = drive + (i_a / p.i_tau) * (i + p.i_th)
    leak = i * (1.0 + i_ahp / p.i_tau)
    return (target - leak) / (p.tau_mem * (i + p.i_th))


def _log_rate_and_sensitivity(i, drive, fac, p: NeuronParams):
    """(r, |dr/d ln i|) of the full equation.

    The sensitivity prices a slice: where the rate barely varies with
    ln(i_mem) (the whole sub-i_th climb) slices can span several e-folds;
    near the feedback knee it forces fine steps.
    """
    i_a = p.fb_i_a0 * np.exp(np.minimum(i, p.i_spk) / p.fb_i_delta)
    a = i_a / p.i_tau
    num = drive + a * (i + p.i_th) - i * fac
    den = p.tau_mem * (i + p.i_th)
    r = num / den
    dnum_dlni = i * (a * (1.0 + (i + p.i_th) / p.fb_i_delta) - fac)
    sens = (dnum_dlni - r * p.tau_mem * i) / den
    return r, np.abs(sens)


def _exp_clipped(x: float) -> float:
    return math.exp(-50.0 if x < -50.0 else (50.0 if x > 50.0 else x))


def _full_substeps_scalar(i_mem, i_in, i_ahp, dt, n, p: NeuronParams) -> float:
    """Scalar twin of _full_substeps on plain floats (hot path)."""
    cap = _CLIP_RATIO * p.i_spk
    floor = p.i_floor
    i = min(max(float(i_mem), floor), cap)
    drive = p.g_mem * (float(i_in) - i_ahp - p.i_tau)
    fac = 1.0 + i_ahp / p.i_tau
    i_th, i_tau, tau = p.i_th, p.i_tau, p.tau_mem
    fb0, fbd, i_spk = p.fb_i_a0, p.fb_i_delta, p.i_spk

    def rate(x):
        i_a = fb0 * math.exp(min(x, i_spk) / fbd)
        return (drive + (i_a / i_tau) * (x + i_th) - x * fac) / (tau * (x + i_th))

    def rate_and_step(x, n_scale):
        i_a = fb0 * math.exp(min(x, i_spk) / fbd)
        a = i_a / i_tau
        den = tau * (x + i_th)
        r = (drive + a * (x + i_th) - x * fac) / den
        sens = abs((x * (a * (1.0 + (x + i_th) / fbd) - fac) - r * tau * x) / den)
        x_allow = min(_X_BIG / n_scale,
                      max(_X_MIN, _X_REL * abs(r) / (sens + 1e-300) / n_scale))
        return r, x_allow

    h_uniform = dt / n
    t_left = dt
    for _ in range(_MAX_SLICES):
        if t_left <= 0.0:
            break
        r1, x_allow = rate_and_step(i, n)
        if (i >= cap and r1 > 0) or (i <= floor and r1 < 0):
            break
        h = min(h_uniform, x_allow / max(abs(r1), 1e-300), t_left)
        i_mid = min(max(i * _exp_clipped(0.5 * h * r1), floor), cap)
        i = min(max(i * _exp_clipped(h * rate(i_mid)), floor), cap)
        t_left -= h
    return i


def _full_substeps(i_mem, i_in, i_ahp, dt, n, p: NeuronParams):
    """Exponential-midpoint integration of the full equation on ln(i_mem).

    Each element advances through its own time slices of width at most
    dt/n, further limited by the sensitivity-priced log-step budget (the
    midpoint predictor must stay local); all budgets shrink with the
    refinement rung n. The state is capped just above the spike threshold:
    the runaway beyond it is treated as instantaneous and resolved by
    spike detection. Mirrors the compiled kernel element for element.
    """
    h_uniform = dt / n
    cap = _CLIP_RATIO * p.i_spk
    i = np.clip(np.asarray(i_mem, dtype=float), p.i_floor, cap)
    drive = p.g_mem * (np.asarray(i_in, dtype=float) - i_ahp - p.i_tau)
    fac = 1.0 + np.asarray(i_ahp, dtype=float) / p.i_tau
    i, drive, fac, i_ahp_b = np.broadcast_arrays(i, drive, fac,
                                                 np.asarray(i_ahp, dtype=float))
    i = np.array(i, dtype=float)
    t_left = np.full(i.shape, float(dt))
    for _ in range(_MAX_SLICES):
        active = t_left > 0.0
        if not np.any(active):
            break
        r1, sens = _log_rate_and_sensitivity(i, drive, fac, p)
        # pinned at a bound with the flow pushing outward: nothing left to
        # integrate for the rest of the interval
        pinned = ((i >= cap) & (r1 > 0)) | ((i <= p.i_floor) & (r1 < 0))
        t_left = np.where(pinned, 0.0, t_left)
        active = active & ~pinned
        x_allow = np.clip(_X_REL * np.abs(r1) / (sens + 1e-300) / n, _X_MIN, _X_BIG / n)
        h = np.minimum(h_uniform, x_allow / np.maximum(np.abs(r1), 1e-300))
        h = np.where(active, np.minimum(h, t_left), 0.0)
        i_mid = np.clip(i * np.exp(np.clip(0.5 * h * r1, -50.0, 50.0)), p.i_floor, cap)
        r2 = _log_rate_full(i_mid, drive, i_ahp_b, p)
        i_new = np.clip(i * np.exp(np.clip(h * r2, -50.0, 50.0)), p.i_floor, cap)
        i = np.where(active, i_new, i)
        t_left = t_left - h
    return i


def _reduced_exact(i, c, lam, h, p: NeuronParams):
    """Exact solution of di/dt = c + lam*i over h (i_a frozen)."""
    grow = np.exp(np.clip(lam * h, -50.0, 50.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        drift = np.where(np.abs(lam) > 1e-300, c / lam * (grow - 1.0), c * h)
    return np.clip(i * grow + drift, p.i_floor, _CLIP_RATIO * p.i_spk)


def _reduced_substeps(i_mem, i_in, dt, n, p: NeuronParams):
    """Midpoint-frozen exponential steps for the reduced equation.

    With i_a frozen the ODE is linear, di/dt = c + lam*i, and advances by
    its exact solution; freezing i_a at the half-step predictor keeps the
    scheme second order in the feedback term. Slices are limited to a
    log-step of 1/n like the full-equation stepper.
    """
    x_max = 0.5
    cap = _CLIP_RATIO * p.i_spk
    i = np.clip(np.asarray(i_mem, dtype=float), p.i_floor, cap)
    c = p.g_mem * np.asarray(i_in, dtype=float) / p.tau_mem
    i, c = np.broadcast_arrays(i, c)
    i = np.array(i, dtype=float)
    t_left = np.full(i.shape, float(dt))

    def lam_of(x):
        i_a = p.fb_i_a0 * np.exp(np.minimum(x, p.i_spk) / p.fb_i_delta)
        return (i_a / p.i_tau - 1.0) / p.tau_mem

    for _ in range(_MAX_SLICES):
        active = t_left > 0.0
        if not np.any(active):
            break
        lam = lam_of(i)
        r_log = (c + lam * i) / i
        pinned = ((i >= cap) & (r_log > 0)) | ((i <= p.i_floor) & (r_log < 0))
        t_left = np.where(pinned, 0.0, t_left)
        active = active & ~pinned
        h = np.minimum(dt / n, x_max / np.maximum(np.abs(r_log), 1e-300))
        h = np.where(active, np.minimum(h, t_left), 0.0)
        i_mid = _reduced_exact(i, c, lam, 0.5 * h, p)
        i_new = _reduced_exact(i, c, lam_of(i_mid), h, p)
        i = np.where(active, i_new, i)
        t_left = t_left - h
    return i


def advance_membrane(i_mem, i_in, i_ahp, dt: float, params: NeuronParams):
    """Advance free-running membrane current(s) by dt (no spike handling).

    Adaptive substepping: substeps are halved until two resolutions agree
    to SUBSTEP_RTOL relative. Elements that both resolutions place at or
    above the spike threshold count as converged: the supra-threshold
    upswing is instantaneous by construction and resolved by spike
    detection, so its exact overshoot is immaterial. i_ahp is held
    constant over the interval.
    """
    if not params.reduced and _membrane_kernel is not None:
        i0, iin, ahp = np.broadcast_arrays(
            np.asarray(i_mem, dtype=float),
            np.asarray(i_in, dtype=float),
            np.asarray(i_ahp, dtype=float),
        )
        shape = i0.shape
        out, ok = _membrane_kernel.advance_all(
            np.ascontiguousarray(i0.ravel()),
            np.ascontiguousarray(iin.ravel()),
            np.ascontiguousarray(ahp.ravel()),
            dt, params.tau_mem, params.g_mem, params.i_tau, params.i_th,
            params.fb_i_a0, params.fb_i_delta, params.i_spk, params.i_floor,
        )
        if not ok:
            raise ConvergenceError("membrane substepping did not converge")
        if np.ndim(i_mem) == np.ndim(i_in) == np.ndim(i_ahp) == 0:
            return float(out[0])
        return out.reshape(shape)

    if not params.reduced and np.size(i_mem) == np.size(i_in) == np.size(i_ahp) == 1:
        val = _advance_membrane_scalar(
            float(np.ravel(i_mem)[0]), float(np.ravel(i_in)[0]),
            float(np.ravel(i_ahp)[0]), dt, params,
        )
        if np.ndim(i_mem) == np.ndim(i_in) == np.ndim(i_ahp) == 0:
            return val
        shape = np.broadcast_shapes(np.shape(i_mem), np.shape(i_in), np.shape(i_ahp))
        return np.full(shape, val)

    i0, iin, ahp = np.broadcast_arrays(
        np.asarray(i_mem, dtype=float),
        np.asarray(i_in, dtype=float),
        np.asarray(i_ahp, dtype=float),
    )
    shape = i0.shape
    i0, iin, ahp = i0.ravel(), iin.ravel(), ahp.ravel()

    def substep(idx, n):
        if params.reduced:
            return _reduced_substeps(i0[idx], iin[idx], dt, n, params)
        return _full_substeps(i0[idx], iin[idx], ahp[idx], dt, n, params)

    pending = np.arange(i0.size)
    result = np.empty(i0.size)
    coarse = substep(pending, 1)
    n = 1
    for _ in range(_MAX_HALVINGS_NEURON):
        n *= 2
        fine = substep(pending, n)
        scale = np.maximum(np.abs(fine), params.i_floor)
        diff = np.abs(fine - coarse) / scale
        crossed_both = (fine >= params.i_spk) & (coarse >= params.i_spk)
        done = (diff < SUBSTEP_RTOL) | crossed_both
        if n >= _KNIFE_MIN_N:
            # disagreement only about whether the runaway crosses threshold
            # within this step: accept, the spike slips by under one step
            done |= (fine >= params.i_spk) != (coarse >= params.i_spk)
        result[pending[done]] = fine[done]
        if done.all():
            return result.reshape(shape)
        pending = pending[~done]
        coarse = fine[~done]
    raise ConvergenceError("membrane substepping did not converge")


def _advance_membrane_scalar(i_mem: float, i_in: float, i_ahp: float,
                             dt: float, params: NeuronParams) -> float:
    n = 1
    i_spk = params.i_spk
    coarse = _full_substeps_scalar(i_mem, i_in, i_ahp, dt, n, params)
    for _ in range(_MAX_HALVINGS_NEURON):
        n *= 2
        fine = _full_substeps_scalar(i_mem, i_in, i_ahp, dt, n, params)
        if fine >= i_spk and coarse >= i_spk:
            return fine
        if abs(fine - coarse) / max(abs(fine), params.i_floor) < SUBSTEP_RTOL:
            return fine
        if n >= _KNIFE_MIN_N and (fine >= i_spk) != (coarse >= i_spk):
            return fine
        coarse = fine
    raise ConvergenceError("membrane substepping did not converge")


def membrane_step(state: NeuronState, i_in: float, dt: float, params: NeuronParams) -> NeuronState:
    """Advance one neuron's membrane by dt.

    During the refractory period the membrane stays pinned at the reset
    current and only the clock advances.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if i_in < 0:
        raise ValueError("i_in must be non-negative")
    new = NeuronState(
        i_mem=state.i_mem,
        i_ahp=state.i_ahp,
        t=state.t + dt,
        refractory_until=state.refractory_until,
        last_spike_time=state.last_spike_time,
    )
    # half-step slack: clock comparisons happen on the dt grid and must be
    # immune to accumulated rounding in state.t
    if state.t < state.refractory_until - 0.5 * dt:
        new.i_mem = params.i_rest
        return new
    new.i_mem = float(advance_membrane(state.i_mem, i_in, state.i_ahp, dt, params))
    return new


def check_spike_and_reset(state: NeuronState, t_now: float, params: NeuronParams):
    """Detect a threshold crossing; on spike, reset and start refractoriness.

    Returns (new_state, spiked).
    """
    if state.i_mem < params.i_spk:
        return state, False
    new = NeuronState(
        i_mem=params.i_rest,
        i_ahp=state.i_ahp,
        t=state.t,
        refractory_until=t_now + params.t_ref,
        last_spike_time=t_now,
    )
    return new, True


def adaptation_pulse_active(state: NeuronState, params: NeuronParams,
                            slack: float = 0.0) -> bool:
    if state.last_spike_time is None:
        return False
    return state.t < state.last_spike_time + params.t_pulse - slack


def adaptation_step(state: NeuronState, dt: float, spiked: bool, params: NeuronParams) -> NeuronState:
    """Relax i_ahp toward its target for dt.

    The drive window is the rectangular pulse [spike, spike + t_pulse); a
    step that begins inside the window uses the pulse target, one that
    begins outside relaxes toward zero. `spiked` marks a spike detected at
    the start of this step (the window then covers the step regardless of
    clock rounding).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    active = spiked or adaptation_pulse_active(state, params, slack=0.5 * dt)
    target = params.g_ahp * params.i_ca_pulse if active else 0.0
    decay = math.exp(-dt / params.tau_ahp)
    new_ahp = target + (state.i_ahp - target) * decay
    return NeuronState(
        i_mem=state.i_mem,
        i_ahp=new_ahp,
        t=state.t,
        refractory_until=state.refractory_until,
        last_spike_time=state.last_spike_time,
    )


def simulate_constant_input(
    params: NeuronParams,
    i_in: float,
    t_end: float,
    dt: float = 1e-4,
    record_trace: bool = False,
):
    """Fixed-step single-neuron run under constant input.

    Returns (spike_times, trace) where trace is the per-step (t, i_mem,
    i_ahp) triplet list when record_trace is set, else None.
    """
    state = NeuronState(i_mem=params.i_rest)
    spikes = []
    trace = [] if record_trace else None
    n = int(round(t_end / dt))
    for k in range(n):
        t = (k + 1) * dt
        state = membrane_step(state, i_in, dt, params)
        state, spiked = check_spike_and_reset(state, t, params)
        state = adaptation_step(state, dt, spiked, params)
        if spiked:
            spikes.append(t)
        if record_trace:
            trace.append((t, state.i_mem, state.i_ahp))
    return spikes, trace


def fi_curve(i_in_grid, duration: float, params: NeuronParams, dt: float = 1e-4):
    """Steady-state firing rate per input current, computed by simulation.

    The rate is counted over the second half of `duration` so transients
    (and adaptation settling) are excluded.
    """
    out = []
    for i_in in i_in_grid:
        spikes, _ = simulate_constant_input(params, float(i_in), duration, dt)
        half = duration / 2
        n = sum(1 for s in spikes if s > half)
        out.append((float(i_in), n / half))
    return out
