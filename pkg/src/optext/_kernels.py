"""Compiled per-path simulation kernels.

Each kernel consumes a block of pre-drawn standard-normal increments (one
row per path) and writes per-path outputs only, so results are independent
of thread count and identical to the straightforward numpy implementations
in `sim` up to floating-point associativity.
"""

import math
import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numpy as np
from numba import njit, prange


@njit(cache=True)
def _cubic_eval(breaks, coeffs, s):
    """Piecewise-cubic (scipy PPoly layout) evaluation with edge clamping."""
    m = breaks.shape[0] - 1
    if s <= breaks[0]:
        j = 0
    elif s >= breaks[m]:
        j = m - 1
    else:
        j = np.searchsorted(breaks, s) - 1
        if j < 0:
            j = 0
        elif j > m - 1:
            j = m - 1
    t = s - breaks[j]
    return ((coeffs[0, j] * t + coeffs[1, j]) * t + coeffs[2, j]) * t + coeffs[3, j]


@njit(parallel=True, cache=True)
def ou_reflected_block(
    incr,
    disc,
    x_start,
    y_start,
    q0,
    pay0,
    a_h,
    b_h,
    sqh,
    c,
    alpha,
    x0_pol,
    x_inf,
    s_min,
    s_breaks,
    s_coeffs,
    pay_out,
    x_out,
    y_out,
):
    blk, n_steps = incr.shape
    for i in prange(blk):
        X = x_start
        Y = y_start
        q = q0
        pay = pay0
        if Y <= 0.0:
            pay_out[i] = pay
            x_out[i] = X
            y_out[i] = 0.0
            continue
        for k in range(n_steps):
            X = X + (a_h - b_h * X) + sqh * incr[i, k]
            if X > q:
                s = X - alpha * Y
                if s >= x0_pol:
                    dxi = Y
                    pay += disc[k] * ((X - c) * dxi - 0.5 * alpha * dxi * dxi)
                    X -= alpha * dxi
                    Y = 0.0
                    break
                ss = s if s > s_min else s_min
                u = x_inf + math.exp(_cubic_eval(s_breaks, s_coeffs, ss))
                dxi = (X - u) / alpha
                if dxi < 0.0:
                    dxi = 0.0
                if dxi > Y:
                    dxi = Y
                pay += disc[k] * ((X - c) * dxi - 0.5 * alpha * dxi * dxi)
                X -= alpha * dxi
                Y -= dxi
                q = X
                if Y <= 0.0:
                    Y = 0.0
                    break
        pay_out[i] = pay
        x_out[i] = X
        y_out[i] = Y


@njit(parallel=True, cache=True)
def bm_running_max_block(
    incr,
    disc,
    base_drift,
    x,
    y,
    barrier,
    m0,
    sq,
    c,
    alpha,
    delta0,
    pay0,
    pay_out,
    x_out,
    y_out,
):
    blk, n_steps = incr.shape
    for i in prange(blk):
        w = 0.0
        m = m0
        xi_prev = delta0
        pay = pay0
        depleted = y <= 0.0
        for k in range(n_steps):
            w += sq * incr[i, k]
            s = (x - barrier) + base_drift[k] + w
            if s > m:
                m = s
            xi = m / alpha
            if xi > y:
                xi = y
            dxi = xi - xi_prev
            if dxi > 0.0:
                x_pre = x + base_drift[k] + w - alpha * xi_prev
                pay += disc[k] * ((x_pre - c) * dxi - 0.5 * alpha * dxi * dxi)
                xi_prev = xi
                if xi >= y:
                    depleted = True
                    x_out[i] = x + base_drift[k] + w - alpha * xi_prev
                    break
        pay_out[i] = pay
        if depleted:
            y_out[i] = 0.0
            if y <= 0.0:
                x_out[i] = x
        else:
            x_out[i] = x + base_drift[n_steps - 1] + w - alpha * xi_prev
            y_out[i] = y - xi_prev
