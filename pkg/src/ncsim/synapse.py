"""Dynamic synapse built around the log-domain filter.

A pre-synaptic spike stretches into a rectangular current pulse of width
pulse_width and amplitude i_w = bias_to_current(v_w); the pulse drives the
synapse filter, whose output i_syn is the EPSC delivered to the soma.

Short-term depression: each spike lowers the weight voltage v_w by d_std
(floored at 0); between spikes v_w relaxes back to w_rest with tau_rec.

Short-term facilitation is not a separate mechanism: when the filter's
gain reference current is biased far above the operating EPSC
(i_th >> i_syn) the full nonlinear kernel makes the per-spike response
grow spike over spike, crossing back to linear behavior once
i_syn >> i_th. Facilitation mode simply integrates the nonlinear kernel.

Output staging, per mode flags:
  inhibitory      -> sign flip at the soma
  nmda_gated      -> multiplied by a sigmoid gate on the post-synaptic
                     membrane current
  conductance     -> scaled by the linear driving-force factor
                     (1 - i_mem_post/i_spk_post), clamped to [0, 1]
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import List

import numpy as np

from .logdomain import (
    FilterParams,
    FilterState,
    bias_to_current,
    step_linear,
    step_nonlinear,
)

# Slope of the NMDA gate, as a fraction of its threshold.
NMDA_SLOPE_FRACTION = 0.1


@dataclass(frozen=True)
class SynapseParams:
    """Synapse configuration. Voltages in V, currents in A, times in s.

    tau_syn/g_syn parameterize the underlying filter; its absolute current
    scale is set by i_tau (i_th = g_syn*i_tau). w_max bounds the weight
    voltage from above; the lower bound is ground.
    """

    tau_syn: float = 0.010
    g_syn: float = 1.0
    w_rest: float = 0.5
    d_std: float = 0.0
    tau_rec: float = 0.100
    pulse_width: float = 1e-6
    i_tau: float = 5e-12
    kappa: float = 0.7
    u_t: float = 0.025
    i_0: float = 5e-16
    w_max: float = 1.0
    nmda_threshold: float = 1e-9
    i_spk_post: float = 5e-9
    inhibitory: bool = False
    nmda_gated: bool = False
    conductance: bool = False
    facilitation: bool = False

    def __post_init__(self):
        if not (self.tau_syn > 0 and self.tau_rec > 0 and self.pulse_width > 0):
            raise ValueError("tau_syn, tau_rec and pulse_width must be positive")
        if self.d_std < 0:
            raise ValueError("d_std must be non-negative")
        if not 0.0 <= self.w_rest <= self.w_max:
            raise ValueError("w_rest must lie in [0, w_max]")
        if self.g_syn <= 0 or self.i_tau <= 0:
            raise ValueError("g_syn and i_tau must be positive")

    @functools.cached_property
    def filter_params(self) -> FilterParams:
        """The log-domain filter realizing (tau_syn, g_syn) at scale i_tau."""
        return FilterParams(
            c_cap=self.tau_syn * self.kappa * self.i_tau / self.u_t,
            u_t=self.u_t,
            kappa=self.kappa,
            i_tau=self.i_tau,
            i_th=self.g_syn * self.i_tau,
            i_0=self.i_0,
        )

    @property
    def sign(self) -> float:
        return -1.0 if self.inhibitory else 1.0


@dataclass
class SynapseState:
    """EPSC filter state plus the instantaneous weight voltage.

    pulse_until/i_w_active describe the currently open input pulse window;
    the filter's t_last is the synapse clock.
    """

    filter: FilterState = field(default_factory=FilterState)
    v_w: float = 0.5
    pulse_until: float = 0.0
    i_w_active: float = 0.0

    @property
    def i_syn(self) -> float:
        return self.filter.i_out

    @property
    def t_last(self) -> float:
        return self.filter.t_last


def make_state(params: SynapseParams, t: float = 0.0) -> SynapseState:
    fp = params.filter_params
    init = fp.i_floor if params.facilitation else 0.0
    return SynapseState(filter=FilterState(i_out=init, t_last=t), v_w=params.w_rest)


def std_recovery_step(state: SynapseState, dt: float, params: SynapseParams) -> SynapseState:
    """Relax v_w toward w_rest: v_w' = w_rest + (v_w - w_rest)*exp(-dt/tau_rec)."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    v = params.w_rest + (state.v_w - params.w_rest) * math.exp(-dt / params.tau_rec)
    return replace(state, v_w=v)


def _advance_filter(state: SynapseState, dt: float, params: SynapseParams,
                    nonlinear: bool) -> SynapseState:
    """Advance the EPSC filter by dt, honoring an open pulse window."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return state
    fp = params.filter_params
    stepper = step_nonlinear if nonlinear else step_linear
    f = state.filter
    t0 = f.t_last
    remaining = dt
    if t0 < state.pulse_until:
        drive = min(state.pulse_until - t0, dt)
        f = stepper(f, state.i_w_active, drive, fp)
        remaining -= drive
    if remaining > 0:
        f = stepper(f, 0.0, remaining, fp)
    return replace(state, filter=f)


def epsc_step(state: SynapseState, dt: float, params: SynapseParams) -> SynapseState:
    """Advance i_syn with the linear kernel (decay between spikes)."""
    return _advance_filter(state, dt, params, nonlinear=False)


def facilitation_step(state: SynapseState, dt: float, params: SynapseParams) -> SynapseState:
    """Advance i_syn with the full nonlinear kernel (facilitation regime)."""
    return _advance_filter(state, dt, params, nonlinear=True)


def step(state: SynapseState, dt: float, params: SynapseParams) -> SynapseState:
    """Advance i_syn and v_w together by dt, per the params' mode."""
    state = _advance_filter(state, dt, params, nonlinear=params.facilitation)
    return std_recovery_step(state, dt, params)


def on_pre_spike(state: SynapseState, t: float, params: SynapseParams) -> SynapseState:
    """Process a pre-synaptic spike arriving at time t.

    Brings the synapse up to t, applies the depression decrement, then
    opens a pulse window of width pulse_width with amplitude
    bias_to_current(v_w). A spike inside a still-open window retriggers it.
    """
    if t < state.t_last:
        raise ValueError(f"out-of-order spike: {t} < {state.t_last}")
    state = step(state, t - state.t_last, params)
    v_w = max(0.0, state.v_w - params.d_std)
    i_w = float(bias_to_current(v_w, params.filter_params))
    return replace(state, v_w=v_w, pulse_until=t + params.pulse_width, i_w_active=i_w)


def pulse_increment(v_w: float, params: SynapseParams) -> float:
    """Closed-form EPSC jump of one isolated pulse in the linear kernel:

        di_syn = g_syn * i_w * (1 - exp(-pulse_width/tau_syn))

    (on top of the decayed state). This is what the engine adds to lumped
    filter banks when the pulse is shorter than the simulation step.
    """
    i_w = float(bias_to_current(v_w, params.filter_params))
    return params.g_syn * i_w * -math.expm1(-params.pulse_width / params.tau_syn)


def stf_reduced_pulse_gain(v_w: float, params: SynapseParams) -> float:
    """Per-pulse growth factor of the facilitation-regime reduction
    tau*di_syn/dt = i_syn*(i_w/i_tau + 1), valid while i_syn << i_th.

    Exposed for unit tests that pin the reduced model against the full
    kernel; production paths always integrate the full equation.
    """
    i_w = float(bias_to_current(v_w, params.filter_params))
    return math.exp(params.pulse_width * (i_w / params.i_tau + 1.0) / params.tau_syn)


def nmda_gate(i_mem_post, params: SynapseParams):
    x = (np.asarray(i_mem_post, dtype=float) - params.nmda_threshold) / (
        NMDA_SLOPE_FRACTION * params.nmda_threshold
    )
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))


def conductance_factor(i_mem_post, params: SynapseParams):
    return np.clip(1.0 - np.asarray(i_mem_post, dtype=float) / params.i_spk_post, 0.0, 1.0)


def gated_output(state: SynapseState, i_mem_post: float, params: SynapseParams) -> float:
    """Synaptic current delivered to the soma, after gating and sign."""
    out = state.i_syn
    if params.nmda_gated:
        out = out * float(nmda_gate(i_mem_post, params))
    if params.conductance:
        out = out * float(conductance_factor(i_mem_post, params))
    return params.sign * out


def homeostatic_scale(
    neuron_synapses: List[SynapseParams],
    rate_estimate: float,
    target_rate: float,
    dt: float,
    adaptation_tau: float,
) -> List[SynapseParams]:
    """Synaptic scaling: multiply every afferent gain by a common factor.

    factor = exp(-dt/adaptation_tau * (rate - target)/target), so gains
    shrink when the neuron runs above target and grow below it; ratios
    between synapses are preserved exactly.
    """
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    factor = math.exp(-dt / adaptation_tau * (rate_estimate - target_rate) / target_rate)
    return [replace(p, g_syn=p.g_syn * factor) for p in neuron_synapses]
