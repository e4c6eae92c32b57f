"""Log-domain filter unit tests.

The nonlinear integrator is checked against an independent fixed-step RK4
integration of the full filter ODE; the linear kernel against its closed
form.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ncsim.logdomain import (
    FilterParams,
    FilterState,
    FilterVariant,
    bias_to_current,
    gain_of,
    nonlinear_steady_state,
    steady_state,
    step_linear,
    step_nonlinear,
    tau_of,
)


def rk4_filter(i0, i_in, t_end, dt, params):
    """Independent RK4 integration of the full nonlinear filter ODE.

    di/dt = (i_th*(i_in - i_tau)/i_tau - i) / (tau*(1 + i_th/i))
    """
    tau = params.c_cap * params.u_t / (params.kappa * params.i_tau)
    s = params.i_th * (i_in - params.i_tau) / params.i_tau

    def f(i):
        return (s - i) / (tau * (1.0 + params.i_th / i))

    n = int(round(t_end / dt))
    i = np.asarray(i0, dtype=float)
    for _ in range(n):
        k1 = f(i)
        k2 = f(i + 0.5 * dt * k1)
        k3 = f(i + 0.5 * dt * k2)
        k4 = f(i + dt * k3)
        i = i + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return i


# ---------------------------------------------------------------- tau_of
def test_tau_dpi_kappa_one():
    p = FilterParams(c_cap=1e-12, u_t=0.025, kappa=1.0, i_tau=1.25e-12)
    assert tau_of(p, FilterVariant.DPI) == pytest.approx(0.020, rel=1e-12)


def test_tau_taucell_ignores_kappa():
    p = FilterParams(c_cap=1e-12, u_t=0.025, kappa=1.0, i_tau=1.25e-12)
    q = FilterParams(c_cap=1e-12, u_t=0.025, kappa=0.4, i_tau=1.25e-12)
    assert tau_of(p, FilterVariant.TAU_CELL) == pytest.approx(0.020, rel=1e-12)
    assert tau_of(q, FilterVariant.TAU_CELL) == pytest.approx(0.020, rel=1e-12)


def test_tau_dpi_kappa_07():
    p = FilterParams(c_cap=1e-12, u_t=0.025, kappa=0.7, i_tau=1.25e-12)
    # c*u_t/(kappa*i_tau) evaluated by hand: 2.5e-14 / 8.75e-13
    assert tau_of(p, FilterVariant.DPI) == pytest.approx(0.0285714285714, rel=1e-9)


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        FilterParams(i_tau=0.0)
    with pytest.raises(ValueError):
        FilterParams(kappa=1.5)
    with pytest.raises(ValueError):
        FilterParams(c_cap=-1e-12)


# ------------------------------------------------------- bias_to_current
def test_bias_zero_gives_dark_current():
    p = FilterParams()
    assert bias_to_current(0.0, p) == pytest.approx(p.i_0, rel=1e-12)


def test_bias_unit_exponent():
    p = FilterParams()
    assert bias_to_current(p.u_t / p.kappa, p) == pytest.approx(p.i_0 * math.e, rel=1e-12)


def test_bias_arbitrary_precision_crosscheck():
    mp = pytest.importorskip("mpmath")
    p = FilterParams(i_0=0.5e-15, kappa=0.7, u_t=0.025)
    got = bias_to_current(0.3, p)
    expected = float(mp.mpf("0.5e-15") * mp.exp(mp.mpf("0.7") * mp.mpf("0.3") / mp.mpf("0.025")))
    assert got == pytest.approx(expected, rel=1e-12)
    assert got == pytest.approx(2.2235e-12, rel=1e-3)


def test_bias_overflow_rejected():
    p = FilterParams()
    with pytest.raises(ValueError):
        bias_to_current(30.0, p)


def test_bias_monotone():
    p = FilterParams()
    v = np.linspace(-0.5, 0.8, 200)
    i = bias_to_current(v, p)
    assert np.all(np.diff(i) > 0)


# ------------------------------------------------------------ steady state
def test_steady_state_taucell_unity():
    p = FilterParams()
    assert steady_state(3e-9, p, FilterVariant.TAU_CELL) == pytest.approx(3e-9, rel=1e-12)


def test_steady_state_dpi_gains():
    p = FilterParams(i_tau=1e-12, i_th=1e-12)
    assert steady_state(4e-9, p, FilterVariant.DPI) == pytest.approx(4e-9, rel=1e-12)
    p2 = FilterParams(i_tau=1e-12, i_th=2e-12)
    assert steady_state(1e-9, p2, FilterVariant.DPI) == pytest.approx(2e-9, rel=1e-12)


def test_steady_state_lpf_gain():
    p = FilterParams(i_tau=2e-15, i_0=1e-15)
    assert steady_state(1e-9, p, FilterVariant.LPF) == pytest.approx(0.5e-9, rel=1e-12)


def test_steady_state_linearity():
    p = FilterParams(i_tau=1e-12, i_th=3e-12)
    for variant in FilterVariant:
        a = steady_state(1e-9, p, variant)
        b = steady_state(2.5e-9, p, variant)
        assert steady_state(1e-9 + 2.5e-9, p, variant) == pytest.approx(a + b, rel=1e-12)


# ------------------------------------------------------------- step_linear
def test_linear_zero_fixed_point():
    p = FilterParams()
    s = step_linear(FilterState(0.0), 0.0, 0.5, p)
    assert s.i_out == 0.0


def test_linear_dt_zero_identity():
    p = FilterParams()
    s = step_linear(FilterState(3.3e-9), 1e-9, 0.0, p)
    assert s.i_out == pytest.approx(3.3e-9, rel=1e-15)


def test_linear_closed_form_example():
    # tau = 20 ms, gain 2: one tau from zero under 1 nA -> 2*(1-1/e) nA
    p = FilterParams(i_tau=1e-12, i_th=2e-12).with_tau(0.020)
    s = step_linear(FilterState(0.0), 1e-9, 0.020, p)
    assert s.i_out == pytest.approx(2e-9 * (1 - math.exp(-1)), rel=1e-12)


def test_linear_matches_rk4_of_linear_ode():
    p = FilterParams(i_tau=1e-12, i_th=2e-12).with_tau(0.020)
    tau, g = 0.020, 2.0
    i_in = 1e-9
    dt = 1e-6
    i = 0.0
    for _ in range(20000):  # 20 ms
        def f(x):
            return (g * i_in - x) / tau
        k1 = f(i)
        k2 = f(i + 0.5 * dt * k1)
        k3 = f(i + 0.5 * dt * k2)
        k4 = f(i + dt * k3)
        i += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    s = step_linear(FilterState(0.0), i_in, 0.020, p)
    assert s.i_out == pytest.approx(i, rel=1e-9)


def test_linear_composition_exact():
    p = FilterParams(i_tau=1e-12, i_th=2e-12).with_tau(0.020)
    i_in = 0.7e-9
    one = step_linear(FilterState(1e-10), i_in, 0.013, p)
    two = step_linear(one, i_in, 0.009, p)
    direct = step_linear(FilterState(1e-10), i_in, 0.022, p)
    assert two.i_out == pytest.approx(direct.i_out, rel=1e-12)
    assert two.t_last == pytest.approx(direct.t_last, rel=1e-12)


def test_linear_array_state():
    p = FilterParams(i_tau=1e-12, i_th=2e-12).with_tau(0.020)
    s = step_linear(FilterState(np.array([0.0, 1e-9])), np.array([1e-9, 0.0]), 0.020, p)
    assert s.i_out[0] == pytest.approx(2e-9 * (1 - math.exp(-1)), rel=1e-12)
    assert s.i_out[1] == pytest.approx(1e-9 * math.exp(-1), rel=1e-12)


# ---------------------------------------------------------- step_nonlinear
def test_nonlinear_converges_to_algebraic_steady_state():
    p = FilterParams(i_tau=5e-12, i_th=50e-12).with_tau(0.010)
    i_in = 2e-9
    s_expected = nonlinear_steady_state(i_in, p)
    state = FilterState(p.i_floor)
    state = step_nonlinear(state, i_in, 0.200, p)  # 20 tau
    assert state.i_out == pytest.approx(s_expected, rel=1e-3)


def test_nonlinear_matches_linear_in_linear_regime():
    # i_out >> i_th and i_in >> i_tau: both kernels should agree within 1%
    p = FilterParams(i_tau=1e-12, i_th=10e-12).with_tau(0.020)
    i_in = 1e-6  # 1e6 * i_tau
    lin = FilterState(1e-9)   # 100 * i_th
    non = FilterState(1e-9)
    for _ in range(50):  # 5 tau in 2 ms slices
        lin = step_linear(lin, i_in, 2e-3, p)
        non = step_nonlinear(non, i_in, 2e-3, p)
        assert non.i_out == pytest.approx(lin.i_out, rel=0.01)


def test_nonlinear_facilitation_regime_growth():
    # i_out << i_th: the response increment grows pulse over pulse
    p = FilterParams(i_tau=5e-12, i_th=10e-9).with_tau(0.020)
    i_w = 100 * p.i_tau
    state = FilterState(p.i_floor)
    increments = []
    for _ in range(5):
        before = state.i_out
        state = step_nonlinear(state, i_w, 1e-3, p)     # pulse
        increments.append(state.i_out - before)
        state = step_nonlinear(state, 0.0, 4e-3, p)     # gap
    assert all(b > a for a, b in zip(increments, increments[1:]))


def oracle_grid():
    """Parameter grid spanning i_in/i_tau in [10, 1e4], i_th/i_tau in [0.1, 100]."""
    sets = []
    for r_in in (10.0, 46.4, 215.0, 2154.0, 1e4):
        for r_th in (0.1, 1.0, 10.0, 100.0):
            sets.append((r_in, r_th))
    return sets


def test_nonlinear_rk4_oracle_grid():
    """step_nonlinear tracks RK4 at dt=1us within 0.1% relative over 10 tau."""
    i_tau = 5e-12
    tau = 2e-3
    deviations = []
    for r_in, r_th in oracle_grid():
        p = FilterParams(i_tau=i_tau, i_th=r_th * i_tau).with_tau(tau)
        i_in = r_in * i_tau
        state = FilterState(p.i_floor)
        i_ref = p.i_floor
        worst = 0.0
        for _ in range(20):  # checkpoints every tau/2 out to 10 tau
            state = step_nonlinear(state, i_in, tau / 2, p)
            i_ref = rk4_filter(i_ref, i_in, tau / 2, 1e-6, p)
            worst = max(worst, abs(state.i_out - i_ref) / abs(i_ref))
        deviations.append((r_in, r_th, worst))
        assert worst < 1e-3, f"ratio grid ({r_in}, {r_th}): deviation {worst}"
    assert len(deviations) >= 20


def test_nonlinear_to_linear_regime_convergence():
    """Deviation between the full and linear kernels decreases
    monotonically as the operating point moves deeper into the linear
    regime. Measured against the RK4 reference so integrator tolerance
    does not mask the model-level convergence."""
    i_tau = 5e-12
    tau = 2e-3
    devs = []
    for scale in (1.0, 10.0, 100.0, 1000.0):
        p = FilterParams(i_tau=i_tau, i_th=10 * i_tau).with_tau(tau)
        i_in = scale * 100 * i_tau
        start = scale * 20 * p.i_th
        lin = FilterState(start)
        i_ref = start
        worst = 0.0
        for _ in range(10):
            lin = step_linear(lin, i_in, tau / 2, p)
            i_ref = rk4_filter(i_ref, i_in, tau / 2, 1e-6, p)
            worst = max(worst, abs(i_ref - lin.i_out) / max(lin.i_out, 1e-30))
        devs.append(worst)
    assert all(b < a for a, b in zip(devs, devs[1:]))


@settings(max_examples=200, deadline=None, derandomize=True)
@given(
    i0=st.floats(0.0, 1e-6),
    i_in=st.floats(0.0, 1e-6),
    dt=st.floats(0.0, 0.1),
    nonlinear=st.booleans(),
)
def test_nonnegativity_property(i0, i_in, dt, nonlinear):
    p = FilterParams(i_tau=5e-12, i_th=20e-12).with_tau(0.010)
    if nonlinear:
        s = step_nonlinear(FilterState(i0), i_in, dt, p)
    else:
        s = step_linear(FilterState(i0), i_in, dt, p)
    assert s.i_out >= 0.0


def test_nonnegativity_step_sequences():
    rng = np.random.default_rng(7)
    p = FilterParams(i_tau=5e-12, i_th=20e-12).with_tau(0.010)
    lin = FilterState(0.0)
    non = FilterState(p.i_floor)
    for _ in range(300):
        i_in = rng.uniform(0, 1e-9)
        dt = rng.uniform(0, 5e-3)
        lin = step_linear(lin, i_in, dt, p)
        non = step_nonlinear(non, i_in, dt, p)
        assert lin.i_out >= 0.0
        assert non.i_out > 0.0


def test_gain_of_variants():
    p = FilterParams(i_tau=2e-12, i_th=6e-12, i_0=1e-15)
    assert gain_of(p, FilterVariant.DPI) == pytest.approx(3.0)
    assert gain_of(p, FilterVariant.LPF) == pytest.approx(5e-4)
    assert gain_of(p, FilterVariant.TAU_CELL) == 1.0
