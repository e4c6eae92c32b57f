"""Spike-driven bi-stable stochastic plasticity.

Each plastic synapse holds an analog weight w bounded by two rails. A
pre-synaptic spike triggers a jump of +/- delta_w gated by two
post-synaptic quantities sampled at the arrival instant:

    UP    if  i_mem > theta_m  and  theta_k1 < ca < theta_k3
    DOWN  if  i_mem < theta_m  and  theta_k1 < ca < theta_k2
    NONE  otherwise

where ca is a calcium trace integrating the post-synaptic spikes (jump
j_ca per spike, decay tau_ca). The upper calcium window implements
stop-learning: once the neuron fires strongly enough that ca > theta_k3,
already-stored patterns are protected from further potentiation.

Between spikes a slew-limited comparator drifts w toward the high rail
when w > theta_w and toward the low rail otherwise, consolidating jumps
into one of two stable states. All randomness lives in the spike trains;
given fixed trains and membrane traces the weight path is reproducible.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import neuron as _neuron
from . import synapse as _synapse
from .rng import stream_rng


class Eligibility(enum.Enum):
    UP = 1
    NONE = 0
    DOWN = -1


@dataclass(frozen=True)
class PlasticityParams:
    """Weight-update machinery configuration.

    Weight quantities (delta_w, rails, theta_w, drift_rate) share one unit,
    the weight voltage; theta_m is a membrane current (A); the theta_k
    thresholds live in calcium-trace units.

    The default calcium thresholds are anchored so that ~30 Hz of
    post-synaptic activity sits inside the depression window: with mean
    trace j_ca*rate*tau_ca, (0.2, 1.0, 2.5) x (j_ca*30*tau_ca).
    """

    delta_w: float = 0.1
    drift_rate: float = 1.0
    theta_w: float = 0.5
    w_lo: float = 0.0
    w_hi: float = 1.0
    theta_m: float = 2.5e-9
    tau_ca: float = 0.100
    j_ca: float = 1.0
    theta_k1: Optional[float] = None
    theta_k2: Optional[float] = None
    theta_k3: Optional[float] = None

    def __post_init__(self):
        anchor = self.j_ca * 30.0 * self.tau_ca
        if self.theta_k1 is None:
            object.__setattr__(self, "theta_k1", 0.2 * anchor)
        if self.theta_k2 is None:
            object.__setattr__(self, "theta_k2", 1.0 * anchor)
        if self.theta_k3 is None:
            object.__setattr__(self, "theta_k3", 2.5 * anchor)
        if not self.w_lo < self.theta_w < self.w_hi:
            raise ValueError("need w_lo < theta_w < w_hi")
        if not self.theta_k1 < self.theta_k2 < self.theta_k3:
            raise ValueError("need theta_k1 < theta_k2 < theta_k3")
        if self.delta_w < 0 or self.drift_rate < 0 or self.j_ca < 0:
            raise ValueError("rates and jump sizes must be non-negative")
        if self.tau_ca <= 0:
            raise ValueError("tau_ca must be positive")


@dataclass
class PlasticSynapseState:
    """Analog weight plus the post-synaptic calcium trace."""

    w: float = 0.0
    ca: float = 0.0

    def binary_state(self, params: PlasticityParams) -> bool:
        """Efficacy state read out against the bi-stability threshold."""
        return self.w > params.theta_w


def calcium_step(
    state: PlasticSynapseState, dt: float, post_spiked: bool, params: PlasticityParams
) -> PlasticSynapseState:
    """Decay ca by dt, then add j_ca if the post neuron spiked."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    ca = state.ca * math.exp(-dt / params.tau_ca)
    if post_spiked:
        ca += params.j_ca
    return replace(state, ca=ca)


def eligibility(i_mem_post, ca, params: PlasticityParams):
    """Jump direction from the membrane comparator and calcium windows.

    Scalar in, Eligibility out; array in, int8 array of {+1, 0, -1} out.
    UP and DOWN windows are disjoint by construction.
    """
    i = np.asarray(i_mem_post, dtype=float)
    c = np.asarray(ca, dtype=float)
    up = (i > params.theta_m) & (c > params.theta_k1) & (c < params.theta_k3)
    down = (i < params.theta_m) & (c > params.theta_k1) & (c < params.theta_k2)
    code = up.astype(np.int8) - down.astype(np.int8)
    if np.ndim(i_mem_post) == 0 and np.ndim(ca) == 0:
        return Eligibility(int(code))
    return code


def on_pre_spike_update(
    state: PlasticSynapseState, i_mem_post: float, params: PlasticityParams
) -> PlasticSynapseState:
    """Apply the jump for one pre-synaptic spike arrival."""
    direction = eligibility(i_mem_post, state.ca, params)
    if direction is Eligibility.NONE:
        return state
    w = state.w + direction.value * params.delta_w
    return replace(state, w=min(max(w, params.w_lo), params.w_hi))


def bistable_drift(state: PlasticSynapseState, dt: float, params: PlasticityParams) -> PlasticSynapseState:
    """Drift w toward a rail at constant slew rate.

    Above theta_w the drive is upward, at or below it downward (the
    comparator tie at w == theta_w breaks low for reproducibility).
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    direction = 1.0 if state.w > params.theta_w else -1.0
    w = state.w + direction * params.drift_rate * dt
    return replace(state, w=min(max(w, params.w_lo), params.w_hi))


def drift_many(w, dt: float, params: PlasticityParams):
    """Vectorized bistable_drift for an array of weights."""
    w = np.asarray(w, dtype=float)
    direction = np.where(w > params.theta_w, 1.0, -1.0)
    return np.clip(w + direction * params.drift_rate * dt, params.w_lo, params.w_hi)


def efficacy(w, synapse_params: "_synapse.SynapseParams"):
    """Pulse amplitude current of a plastic synapse: exponential in w."""
    return _synapse.bias_to_current(w, synapse_params.filter_params)


# -------------------------------------------------------------------------
# Monte-Carlo transition statistics
# -------------------------------------------------------------------------

@dataclass(frozen=True)
class TransitionCircuit:
    """Single-synapse stochastic-learning testbench.

    A post neuron is driven by a teacher synapse fed with a Poisson train
    (rate teacher_rate_scale * post_rate), reproducing the protocol of
    perceptron-style chip experiments; the plastic synapse under test sees
    an independent Poisson pre train. Only the spike trains carry
    randomness: given the trains, every trial is exactly reproducible.
    """

    neuron: "_neuron.NeuronParams"
    teacher: "_synapse.SynapseParams"
    plasticity: PlasticityParams
    teacher_rate_scale: float = 1.0
    dt: float = 1e-4


def default_transition_circuit() -> TransitionCircuit:
    """Operating point used by the transition-probability experiments.

    Calibrated once so a teacher train at ~30x the requested post rate
    holds the post neuron near that rate with strongly fluctuating
    membrane current (the membrane comparator then gates stochastically);
    frozen here for reproducibility.
    """
    npar = _neuron.NeuronParams(
        tau_mem=0.020,
        i_tau=5e-12,
        i_th=50e-12,
        i_spk=5e-9,
        t_ref=0.002,
    )
    teacher = _synapse.SynapseParams(
        tau_syn=0.005,
        g_syn=200.0,
        w_rest=0.402,
        pulse_width=1e-4,
    )
    plast = PlasticityParams(
        delta_w=0.22,
        drift_rate=1.2,
        theta_w=0.5,
        theta_m=4.2e-9,
        tau_ca=0.100,
        j_ca=1.0,
    )
    return TransitionCircuit(neuron=npar, teacher=teacher, plasticity=plast,
                             teacher_rate_scale=30.0)


def _poisson_times(rate: float, t_end: float, rng) -> np.ndarray:
    if rate <= 0:
        return np.empty(0)
    times = []
    t = rng.exponential(1.0 / rate)
    while t < t_end:
        times.append(t)
        t += rng.exponential(1.0 / rate)
    return np.asarray(times)


def _step_counts(rate: float, duration: float, n_steps: int, dt: float, rng):
    times = _poisson_times(rate, duration, rng)
    if not times.size:
        return np.zeros(n_steps, dtype=np.int64)
    return np.bincount(np.minimum((times / dt).astype(int), n_steps - 1),
                       minlength=n_steps)


def run_transition_trials(
    circuit: TransitionCircuit,
    pre_rate: float,
    post_rate: float,
    duration: float,
    seed: int,
    trials,
    start_high: bool = False,
):
    """Run a batch of independent seeded trials (vectorized across trials).

    Each trial's spike trains come from its own (seed, trial) stream, so
    results do not depend on how trials are batched. The plastic synapse
    starts at the low (or high) rail; its EPSC is left uncoupled from the
    soma so the operating point is fixed by the teacher alone, as in the
    single-synapse chip protocol. Returns the final weights array.
    """
    p = circuit.plasticity
    np_ = circuit.neuron
    dt = circuit.dt
    n_steps = int(round(duration / dt))
    trials = list(trials)
    n = len(trials)

    pre = np.empty((n_steps, n), dtype=np.int64)
    teach = np.empty((n_steps, n), dtype=np.int64)
    for j, trial in enumerate(trials):
        pre[:, j] = _step_counts(pre_rate, duration, n_steps, dt,
                                 stream_rng(seed, "transition/pre", trial))
        teach[:, j] = _step_counts(circuit.teacher_rate_scale * post_rate, duration,
                                   n_steps, dt,
                                   stream_rng(seed, "transition/teacher", trial))

    # teacher EPSC: lumped linear kernel, one pulse increment per spike
    tp = circuit.teacher
    i_w = float(_synapse.bias_to_current(tp.w_rest, tp.filter_params))
    delta_epsc = tp.g_syn * i_w * -math.expm1(-tp.pulse_width / tp.tau_syn)
    decay_syn = math.exp(-dt / tp.tau_syn)
    decay_ca = math.exp(-dt / p.tau_ca)

    i_syn = np.zeros(n)
    i_mem = np.full(n, np_.i_rest)
    refr_until = np.full(n, -1.0)
    ca = np.zeros(n)
    w = np.full(n, p.w_hi if start_high else p.w_lo)

    for k in range(n_steps):
        t_k = k * dt
        t_next = (k + 1) * dt
        # pre-synaptic arrivals sampled against the start-of-step membrane
        arrivals = pre[k]
        if arrivals.any():
            elig = _eligibility_signs(i_mem, ca, p)
            w = np.clip(w + arrivals * elig * p.delta_w, p.w_lo, p.w_hi)
        w = drift_many(w, dt, p)
        i_syn = (i_syn + teach[k] * delta_epsc) * decay_syn
        refractory = t_k < refr_until
        i_mem = np.asarray(
            _neuron.advance_membrane(i_mem, i_syn, 0.0, dt, np_), dtype=float)
        i_mem[refractory] = np_.i_rest
        spiked = i_mem >= np_.i_spk
        i_mem[spiked] = np_.i_rest
        refr_until[spiked] = t_next + np_.t_ref
        ca = ca * decay_ca + spiked * p.j_ca
    return w


def _eligibility_signs(i_mem, ca, p: PlasticityParams):
    up = (i_mem > p.theta_m) & (ca > p.theta_k1) & (ca < p.theta_k3)
    down = (i_mem < p.theta_m) & (ca > p.theta_k1) & (ca < p.theta_k2)
    return up.astype(float) - down.astype(float)


def run_transition_trial(
    circuit: TransitionCircuit,
    pre_rate: float,
    post_rate: float,
    duration: float,
    seed: int,
    trial: int,
    start_high: bool = False,
) -> PlasticSynapseState:
    """Single-trial convenience wrapper around run_transition_trials."""
    w = run_transition_trials(circuit, pre_rate, post_rate, duration, seed,
                              [trial], start_high=start_high)
    return PlasticSynapseState(w=float(w[0]), ca=0.0)


def transition_probability(
    pre_rate: float,
    post_rate: float,
    duration: float,
    n_trials: int,
    seed: int,
    direction: str = "ltp",
    circuit: Optional[TransitionCircuit] = None,
) -> float:
    """Monte-Carlo transition probability over independent seeded trials.

    direction "ltp": fraction of trials whose binary state flips low->high;
    "ltd": fraction flipping high->low.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if direction not in ("ltp", "ltd"):
        raise ValueError("direction must be 'ltp' or 'ltd'")
    circuit = circuit or default_transition_circuit()
    start_high = direction == "ltd"
    w = run_transition_trials(circuit, pre_rate, post_rate, duration, seed,
                              range(n_trials), start_high=start_high)
    high = w > circuit.plasticity.theta_w
    flips = np.count_nonzero(~high) if start_high else np.count_nonzero(high)
    return flips / n_trials


def ltp_transition_probability(
    pre_rate: float,
    post_rate: float,
    duration: float,
    n_trials: int,
    seed: int,
    circuit: Optional[TransitionCircuit] = None,
) -> float:
    """Probability that stimulation potentiates a low synapse."""
    return transition_probability(
        pre_rate, post_rate, duration, n_trials, seed, "ltp", circuit
    )
