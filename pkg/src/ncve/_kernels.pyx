# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: Gram entries, exponential sums, characteristic
determinants and the adaptive contour walk used for root counting."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, M_PI
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef extern from "complex.h" nogil:
    double complex cexp(double complex)
    double cabs(double complex)
    double carg(double complex)
    double complex conj(double complex)

cdef int SERIES_TERMS = 18
cdef double SERIES_RADIUS = 0.5

STATUS_OK = 0
STATUS_ZERO = 1
STATUS_DEPTH = 2


cdef inline double complex _phi1(double complex z) nogil:
    cdef double complex term, total
    cdef int k
    if cabs(z) < SERIES_RADIUS:
        term = 1.0
        total = term
        for k in range(1, SERIES_TERMS):
            term = term * (-z) / (k + 1)
            total = total + term
        return total
    return (1.0 - cexp(-z)) / z


def phi1(z):
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] flat = np.ascontiguousarray(
        np.asarray(z, dtype=np.complex128).ravel())
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.empty_like(flat)
    cdef Py_ssize_t i
    for i in range(flat.shape[0]):
        out[i] = _phi1(flat[i])
    return out.reshape(np.shape(z))


def gram_block(mu_row, mu_col, double T):
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] r = np.ascontiguousarray(mu_row, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] c = np.ascontiguousarray(mu_col, dtype=np.complex128)
    cdef Py_ssize_t n = r.shape[0], m = c.shape[0], i, j
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] G = np.empty((n, m), dtype=np.complex128)
    for i in range(n):
        for j in range(m):
            G[i, j] = T * _phi1((r[i] + conj(c[j])) * T)
    return G


def expsum_eval(exponents, coeffs, t):
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] lam = np.ascontiguousarray(exponents, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] c = np.ascontiguousarray(coeffs, dtype=np.complex128)
    tarr = np.asarray(t, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] tt = np.ascontiguousarray(tarr.ravel())
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.empty(tt.shape[0], dtype=np.complex128)
    cdef Py_ssize_t p, k
    cdef double complex acc
    for p in range(tt.shape[0]):
        acc = 0
        for k in range(lam.shape[0]):
            acc = acc + c[k] * cexp(-conj(lam[k]) * tt[p])
        out[p] = acc
    return out.reshape(tarr.shape)


cdef double complex _det_at(double complex* coefs, int n, int nk, double tau,
                            double complex z, double complex* work) nogil:
    """det(z I - sum_k A_k exp(-z k tau)); ``work`` holds n*n entries."""
    cdef int i, j, k, p, piv
    cdef double complex e, det, tmp, factor
    cdef double best, a
    if n == 1:
        det = z
        for k in range(nk):
            det = det - coefs[k] * cexp(-z * k * tau)
        return det
    for i in range(n * n):
        work[i] = 0
    for i in range(n):
        work[i * n + i] = z
    for k in range(nk):
        e = cexp(-z * k * tau)
        for i in range(n * n):
            work[i] = work[i] - coefs[k * n * n + i] * e
    det = 1.0
    for j in range(n):
        piv = j
        best = cabs(work[j * n + j])
        for i in range(j + 1, n):
            a = cabs(work[i * n + j])
            if a > best:
                best = a
                piv = i
        if best == 0.0:
            return 0.0
        if piv != j:
            for p in range(n):
                tmp = work[j * n + p]
                work[j * n + p] = work[piv * n + p]
                work[piv * n + p] = tmp
            det = -det
        det = det * work[j * n + j]
        for i in range(j + 1, n):
            factor = work[i * n + j] / work[j * n + j]
            for p in range(j, n):
                work[i * n + p] = work[i * n + p] - factor * work[j * n + p]
    return det


def char_det_batch(coefs, double tau, z):
    cdef cnp.ndarray[cnp.complex128_t, ndim=3] A = np.ascontiguousarray(coefs, dtype=np.complex128)
    zarr = np.asarray(z, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] zz = np.ascontiguousarray(zarr.ravel())
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.empty(zz.shape[0], dtype=np.complex128)
    cdef int nk = A.shape[0], n = A.shape[1]
    cdef double complex* work = <double complex*> malloc(n * n * sizeof(double complex))
    cdef Py_ssize_t p
    try:
        for p in range(zz.shape[0]):
            out[p] = _det_at(&A[0, 0, 0], n, nk, tau, zz[p], work)
    finally:
        free(work)
    return out.reshape(zarr.shape)


cdef struct Interval:
    double sa
    double sb
    double complex fa
    double complex fb
    int depth


def segment_arg_change(coefs, double tau, za, zb, int n_init=32,
                       double max_dphi=M_PI / 4, int max_depth=40,
                       double zero_tol=1e-14):
    cdef cnp.ndarray[cnp.complex128_t, ndim=3] A = np.ascontiguousarray(coefs, dtype=np.complex128)
    cdef int nk = A.shape[0], n = A.shape[1]
    cdef double complex a = za, b = zb, dz = b - a, z, fm
    cdef double complex* work = <double complex*> malloc(n * n * sizeof(double complex))
    cdef int cap = n_init + 4 * (max_depth + 2)
    cdef Interval* stack = <Interval*> malloc(cap * sizeof(Interval))
    cdef int top = 0, i
    cdef double total = 0.0, sm, d1, d2, bend, lim
    cdef double complex* vals = <double complex*> malloc((n_init + 1) * sizeof(double complex))
    cdef double complex* cptr = &A[0, 0, 0]
    cdef Interval cur
    try:
        for i in range(n_init + 1):
            z = a + (<double> i / n_init) * dz
            vals[i] = _det_at(cptr, n, nk, tau, z, work)
            if cabs(vals[i]) <= zero_tol * (1.0 + cabs(z)) ** n:
                return 0.0, STATUS_ZERO
        for i in range(n_init - 1, -1, -1):
            stack[top].sa = <double> i / n_init
            stack[top].sb = <double> (i + 1) / n_init
            stack[top].fa = vals[i]
            stack[top].fb = vals[i + 1]
            stack[top].depth = 0
            top += 1
        while top > 0:
            top -= 1
            cur = stack[top]
            sm = 0.5 * (cur.sa + cur.sb)
            z = a + sm * dz
            fm = _det_at(cptr, n, nk, tau, z, work)
            if cabs(fm) <= zero_tol * (1.0 + cabs(z)) ** n:
                return total, STATUS_ZERO
            d1 = carg(fm / cur.fa)
            d2 = carg(cur.fb / fm)
            bend = cabs(fm - 0.5 * (cur.fa + cur.fb))
            lim = cabs(cur.fa)
            if cabs(cur.fb) < lim:
                lim = cabs(cur.fb)
            if fabs(d1) < max_dphi and fabs(d2) < max_dphi and bend < 0.25 * lim:
                total += d1 + d2
                continue
            if cur.depth >= max_depth:
                return total, STATUS_DEPTH
            if top + 2 > cap:
                return total, STATUS_DEPTH
            stack[top].sa = sm
            stack[top].sb = cur.sb
            stack[top].fa = fm
            stack[top].fb = cur.fb
            stack[top].depth = cur.depth + 1
            top += 1
            stack[top].sa = cur.sa
            stack[top].sb = sm
            stack[top].fa = cur.fa
            stack[top].fb = fm
            stack[top].depth = cur.depth + 1
            top += 1
        return total, STATUS_OK
    finally:
        free(work)
        free(stack)
        free(vals)
