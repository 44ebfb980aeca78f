"""Compiled inner loops for the panel quadrature.

A phase derivative is described by four arrays from ``prep``: the combined
factor c_k * b_k (b_k - 1) ... (b_k - order + 1), the shifted exponent, and an
integer copy of the exponent used when it is integral (cheaper power).
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def prep(exps, coefs, order):
    n = exps.shape[0]
    fac = np.empty(n)
    sh = np.empty(n)
    bint = np.zeros(n, dtype=np.int64)
    isint = np.zeros(n, dtype=np.bool_)
    for k in range(n):
        f = 1.0
        for i in range(order):
            f *= exps[k] - i
        fac[k] = f * coefs[k]
        sh[k] = exps[k] - order
        if sh[k] == math.floor(sh[k]) and abs(sh[k]) <= 16:
            isint[k] = True
            bint[k] = int(sh[k])
    return fac, sh, bint, isint


@njit(cache=True, nogil=True, inline="always")
def _ipow(t, n):
    # binary powering; numba's float ** int64 falls back to a slow generic path
    if n < 0:
        t = 1.0 / t
        n = -n
    r = 1.0
    while n:
        if n & 1:
            r *= t
        t *= t
        n >>= 1
    return r


@njit(cache=True, nogil=True, inline="always")
def _eval(t, fac, sh, bint, isint):
    s = 0.0
    for k in range(fac.shape[0]):
        if isint[k]:
            s += fac[k] * _ipow(t, bint[k])
        else:
            s += fac[k] * t ** sh[k]
    return s


@njit(cache=True, nogil=True)
def phase_values(t, exps, coefs, order):
    """sum_k coefs[k] * (d/dt)^order t**exps[k], elementwise over a flat array."""
    fac, sh, bint, isint = prep(exps, coefs, order)
    out = np.empty(t.shape[0])
    for i in range(t.shape[0]):
        out[i] = _eval(t[i], fac, sh, bint, isint)
    return out


@njit(cache=True, nogil=True)
def greedy_panels(a, b, probes, exps, coefs, lam, limit, max_panels):
    """Left-to-right partition with lam * max|phi'| * width <= limit on each panel.

    max|phi'| on a candidate panel is estimated from the probe points.
    Returns an (m, 2) array, or an empty array when max_panels is exceeded.
    """
    fac, sh, bint, isint = prep(exps, coefs, 1)
    out = np.empty((1024, 2))
    m = 0
    x = a
    q = probes.shape[0]
    h = b - a
    while x < b:
        h = min(2.0 * h, b - x)
        while True:
            mx = 0.0
            for i in range(q):
                v = abs(_eval(x + 0.5 * h * (probes[i] + 1.0), fac, sh, bint, isint))
                if v > mx:
                    mx = v
            f = lam * mx
            if f * h <= limit:
                break
            h = min(0.5 * h, 0.97 * limit / f)
        if m == out.shape[0]:
            if m >= max_panels:
                return np.empty((0, 2))
            grown = np.empty((2 * m, 2))
            grown[:m] = out[:m]
            out = grown
        right = x + h
        if b - right < 1e-13 * (b - a):
            right = b
        out[m, 0] = x
        out[m, 1] = right
        m += 1
        x = right
    return out[:m].copy()


@njit(cache=True, nogil=True)
def weighted_sums(mid, half, nodes, weights, amp, exps, coefs, scale):
    """Per-panel half * sum_q w_q amp_q exp(i scale phi(mid + half x_q)).

    ``amp`` is (panels, nodes) complex, or shape (0, 0) for the unit amplitude.
    """
    fac, sh, bint, isint = prep(exps, coefs, 0)
    m = mid.shape[0]
    q = nodes.shape[0]
    unit = amp.shape[0] == 0
    out = np.empty(m, dtype=np.complex128)
    for i in range(m):
        re = 0.0
        im = 0.0
        for j in range(q):
            t = mid[i] + half[i] * nodes[j]
            ang = scale * _eval(t, fac, sh, bint, isint)
            c = math.cos(ang)
            s = math.sin(ang)
            w = weights[j]
            if unit:
                re += w * c
                im += w * s
            else:
                a = amp[i, j]
                re += w * (a.real * c - a.imag * s)
                im += w * (a.real * s + a.imag * c)
        out[i] = complex(re * half[i], im * half[i])
    return out


@njit(cache=True, nogil=True, inline="always")
def _step(x):
    # C-infinity step: 0 for x <= 0, 1 for x >= 1
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    g0 = math.exp(-1.0 / x)
    g1 = math.exp(-1.0 / (1.0 - x))
    return g0 / (g0 + g1)


@njit(cache=True, nogil=True, inline="always")
def _theta(t):
    # eta(t) - eta(2t) with eta(t) = step(2 - t)
    return _step(2.0 - t) - _step(2.0 - 2.0 * t)


@njit(cache=True, nogil=True)
def theta_values(t):
    out = np.empty(t.shape[0])
    for i in range(t.shape[0]):
        out[i] = _theta(abs(t[i]))
    return out


@njit(cache=True, nogil=True)
def cutoff_amplitude(t, alpha):
    """theta(t) t^{-1-alpha} for t > 0."""
    out = np.empty(t.shape[0])
    for i in range(t.shape[0]):
        x = t[i]
        th = _theta(x)
        out[i] = 0.0 if th == 0.0 else th * x ** (-1.0 - alpha)
    return out
