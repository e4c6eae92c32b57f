"""Compiled inner loop of the full membrane equation.

One element of the population is integrated by adaptive time slices of an
exponential-midpoint step on ln(i_mem) (slice budget priced by the local
rate sensitivity), wrapped in a per-element step-halving accuracy ladder.
This mirrors the pure-python stepper in neuron.py element for element;
numba only removes the per-slice array-dispatch overhead.

Failure flags are returned, not raised: numba exceptions are expensive
and the caller owns the error contract.
"""

import math

import numba
import numpy as np

RTOL = 1e-4
CLIP_RATIO = 2.0
MAX_HALVINGS = 12
MAX_SLICES = 100000
X_BIG = 8.0
X_MIN = 1e-3
X_REL = 0.25
KNIFE_MIN_N = 32


@numba.njit(cache=True, inline="always")
def _exp_clipped(x):
    if x > 50.0:
        x = 50.0
    elif x < -50.0:
        x = -50.0
    return math.exp(x)


@numba.njit(cache=True)
def _substeps_one(i0, drive, fac, dt, n,
                  tau, i_tau, i_th, fb0, fbd, i_spk, floor):
    """Sliced exponential-midpoint integration of one element."""
    cap = CLIP_RATIO * i_spk
    i = i0
    if i < floor:
        i = floor
    elif i > cap:
        i = cap
    x_big = X_BIG / n
    x_rel = X_REL / n
    h_uniform = dt / n
    t_left = dt
    for _ in range(MAX_SLICES):
        if t_left <= 0.0:
            break
        im = i if i < i_spk else i_spk
        a = fb0 * math.exp(im / fbd) / i_tau
        den = tau * (i + i_th)
        r1 = (drive + a * (i + i_th) - i * fac) / den
        if (i >= cap and r1 > 0.0) or (i <= floor and r1 < 0.0):
            break
        sens = abs((i * (a * (1.0 + (i + i_th) / fbd) - fac) - r1 * tau * i) / den)
        x_allow = x_rel * abs(r1) / (sens + 1e-300)
        if x_allow > x_big:
            x_allow = x_big
        elif x_allow < X_MIN:
            x_allow = X_MIN
        h = x_allow / (abs(r1) + 1e-300)
        if h > h_uniform:
            h = h_uniform
        if h > t_left:
            h = t_left
        i_mid = i * _exp_clipped(0.5 * h * r1)
        if i_mid < floor:
            i_mid = floor
        elif i_mid > cap:
            i_mid = cap
        im = i_mid if i_mid < i_spk else i_spk
        a2 = fb0 * math.exp(im / fbd) / i_tau
        r2 = (drive + a2 * (i_mid + i_th) - i_mid * fac) / (tau * (i_mid + i_th))
        i = i * _exp_clipped(h * r2)
        if i < floor:
            i = floor
        elif i > cap:
            i = cap
        t_left -= h
    return i


@numba.njit(cache=True)
def advance_all(i_mem, i_in, i_ahp, dt,
                tau, g_mem, i_tau, i_th, fb0, fbd, i_spk, floor):
    """Adaptive-ladder advance of every element; returns (out, ok)."""
    n_el = i_mem.shape[0]
    out = np.empty(n_el)
    ok = True
    for e in range(n_el):
        drive = g_mem * (i_in[e] - i_ahp[e] - i_tau)
        fac = 1.0 + i_ahp[e] / i_tau
        coarse = _substeps_one(i_mem[e], drive, fac, dt, 1,
                               tau, i_tau, i_th, fb0, fbd, i_spk, floor)
        n = 1
        converged = False
        fine = coarse
        for _ in range(MAX_HALVINGS):
            n *= 2
            fine = _substeps_one(i_mem[e], drive, fac, dt, n,
                                 tau, i_tau, i_th, fb0, fbd, i_spk, floor)
            if fine >= i_spk and coarse >= i_spk:
                converged = True
                break
            scale = abs(fine)
            if scale < floor:
                scale = floor
            if abs(fine - coarse) / scale < RTOL:
                converged = True
                break
            if n >= KNIFE_MIN_N and ((fine >= i_spk) != (coarse >= i_spk)):
                converged = True
                break
            coarse = fine
        out[e] = fine
        if not converged:
            ok = False
    return out, ok
