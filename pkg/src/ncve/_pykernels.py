"""Pure-Python/numpy versions of the hot kernels.

Semantics are identical to the compiled ``_kernels`` module; the two are
checked against each other in the test suite.
"""

import cmath
import math

import numpy as np

# Taylor terms for (1 - exp(-z)) / z when |z| < _SERIES_RADIUS
_SERIES_RADIUS = 0.5
_SERIES_TERMS = 18

STATUS_OK = 0
STATUS_ZERO = 1
STATUS_DEPTH = 2


def _phi1_scalar(z):
    if abs(z) < _SERIES_RADIUS:
        term = 1.0 + 0j
        total = term
        for k in range(1, _SERIES_TERMS):
            term = term * (-z) / (k + 1)
            total += term
        return total
    return (1.0 - cmath.exp(-z)) / z


def phi1(z):
    """(1 - exp(-z)) / z, continuous at z = 0."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    flat_in = z.ravel()
    flat_out = out.ravel()
    small = np.abs(flat_in) < _SERIES_RADIUS
    big = ~small
    with np.errstate(over="ignore", invalid="ignore"):
        flat_out[big] = -np.expm1(-flat_in[big]) / flat_in[big]
    for i in np.flatnonzero(small):
        flat_out[i] = _phi1_scalar(flat_in[i])
    return out


def gram_block(mu_row, mu_col, T):
    mu_row = np.asarray(mu_row, dtype=complex)
    mu_col = np.asarray(mu_col, dtype=complex)
    s = mu_row[:, None] + np.conj(mu_col)[None, :]
    return T * phi1(s * T)


def expsum_eval(exponents, coeffs, t):
    exponents = np.asarray(exponents, dtype=complex)
    coeffs = np.asarray(coeffs, dtype=complex)
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        e = np.exp(-np.conj(exponents)[None, :] * t.ravel()[:, None])
    return (e @ coeffs).reshape(t.shape)


def _char_matrix(coefs, tau, z):
    n = coefs.shape[1]
    m = z * np.eye(n, dtype=complex)
    for k in range(coefs.shape[0]):
        m = m - coefs[k] * cmath.exp(-z * k * tau)
    return m


def char_det_batch(coefs, tau, z):
    coefs = np.asarray(coefs, dtype=complex)
    z = np.asarray(z, dtype=complex)
    flat = z.ravel()
    n = coefs.shape[1]
    k = np.arange(coefs.shape[0])
    with np.errstate(over="ignore", invalid="ignore"):
        e = np.exp(-np.outer(flat, k) * tau)  # (p, M+1)
    if n == 1:
        out = flat - e @ coefs[:, 0, 0]
    else:
        mats = flat[:, None, None] * np.eye(n)[None] - np.einsum("pk,kij->pij", e, coefs)
        out = np.linalg.det(mats)
    return out.reshape(z.shape)


def _char_det_scalar(coefs, tau, z):
    n = coefs.shape[1]
    if n == 1:
        acc = z
        for k in range(coefs.shape[0]):
            acc -= coefs[k, 0, 0] * cmath.exp(-z * k * tau)
        return acc
    return complex(np.linalg.det(_char_matrix(coefs, tau, z)))


def segment_arg_change(coefs, tau, za, zb, n_init=32, max_dphi=math.pi / 4,
                       max_depth=40, zero_tol=1e-14):
    """Total change of arg det(...) along the segment za -> zb.

    Adaptive bisection: an interval is accepted when both halves turn by
    less than ``max_dphi`` and the midpoint value stays close to the chord
    between the endpoint values.
    Returns ``(dphi, status)``.
    """
    coefs = np.asarray(coefs, dtype=complex)
    n = coefs.shape[1]
    za = complex(za)
    zb = complex(zb)
    dz = zb - za

    def f(s):
        z = za + s * dz
        val = _char_det_scalar(coefs, tau, z)
        if abs(val) <= zero_tol * (1.0 + abs(z)) ** n:
            return val, True
        return val, False

    ts = [i / n_init for i in range(n_init + 1)]
    vals = []
    for s in ts:
        v, hit = f(s)
        if hit:
            return 0.0, STATUS_ZERO
        vals.append(v)

    total = 0.0
    stack = []
    for i in range(n_init - 1, -1, -1):
        stack.append((ts[i], vals[i], ts[i + 1], vals[i + 1], 0))
    while stack:
        sa, fa, sb, fb, depth = stack.pop()
        sm = 0.5 * (sa + sb)
        fm, hit = f(sm)
        if hit:
            return total, STATUS_ZERO
        d1 = cmath.phase(fm / fa)
        d2 = cmath.phase(fb / fm)
        bend = abs(fm - 0.5 * (fa + fb))
        if abs(d1) < max_dphi and abs(d2) < max_dphi and bend < 0.25 * min(abs(fa), abs(fb)):
            total += d1 + d2
            continue
        if depth >= max_depth:
            return total, STATUS_DEPTH
        stack.append((sm, fm, sb, fb, depth + 1))
        stack.append((sa, fa, sm, fm, depth + 1))
    return total, STATUS_OK
