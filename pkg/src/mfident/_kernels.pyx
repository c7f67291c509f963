# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: the finite-volume drift flux and the O(N^2) particle
interaction sums.  ``_kernels_py`` mirrors every function here."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow, sqrt

cnp.import_array()


def muscl_flux(u_in, v_in):
    cdef const double[::1] u = np.ascontiguousarray(u_in, dtype=np.float64)
    cdef const double[::1] v = np.ascontiguousarray(v_in, dtype=np.float64)
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i
    cdef double a, b, p, ul, ur, vi
    s_arr = np.zeros(n)
    out_arr = np.empty(n - 1)
    cdef double[::1] s = s_arr
    cdef double[::1] out = out_arr
    for i in range(1, n - 1):
        a = u[i] - u[i - 1]
        b = u[i + 1] - u[i]
        p = a * b
        if p > 0:
            s[i] = 2.0 * p / (a + b)
    for i in range(n - 1):
        vi = v[i]
        if vi > 0:
            out[i] = vi * (u[i] + 0.5 * s[i])
        elif vi < 0:
            out[i] = vi * (u[i + 1] - 0.5 * s[i + 1])
        else:
            out[i] = 0.0
    return out_arr


cdef inline double _rpow(double r, double e) nogil:
    # exact shortcuts for the exponents used by the built-in kernels
    if e == 1.0:
        return r
    if e == 2.0:
        return r * r
    if e == 3.0:
        return r * r * r
    if e == 0.0:
        return 1.0
    if e == -1.5:
        return 1.0 / (r * sqrt(r))
    if e == -1.0:
        return 1.0 / r
    if e == 0.5:
        return sqrt(r)
    return pow(r, e)


def pairwise_drift_power(x_in, coefs_in, exps_in, double cutoff):
    cdef const double[::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef const double[::1] coefs = np.ascontiguousarray(coefs_in, dtype=np.float64)
    cdef const double[::1] exps = np.ascontiguousarray(exps_in, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nterm = coefs.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double d, r, phi
    out_arr = np.zeros(n)
    cdef double[::1] out = out_arr
    with nogil:
        # each pair once: +phi to the left particle, -phi to the right one
        for i in range(n):
            for j in range(i + 1, n):
                d = x[j] - x[i]
                r = fabs(d)
                if r < cutoff:
                    continue
                phi = 0.0
                for k in range(nterm):
                    phi = phi + coefs[k] * _rpow(r, exps[k])
                if d < 0:
                    phi = -phi
                out[i] += phi
                out[j] -= phi
        for i in range(n):
            out[i] = out[i] / n
    return out_arr


def pairwise_drift_table(x_in, tr_in, tp_in, double cutoff):
    cdef const double[::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef const double[::1] tr = np.ascontiguousarray(tr_in, dtype=np.float64)
    cdef const double[::1] tp = np.ascontiguousarray(tp_in, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = tr.shape[0]
    cdef Py_ssize_t i, j, lo, hi, mid
    cdef double d, r, phi
    out_arr = np.zeros(n)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                d = x[j] - x[i]
                r = fabs(d)
                if r < cutoff:
                    continue
                if r >= tr[m - 1]:
                    phi = tp[m - 1]
                else:
                    lo = 0
                    hi = m - 1
                    while hi - lo > 1:
                        mid = (lo + hi) // 2
                        if tr[mid] <= r:
                            lo = mid
                        else:
                            hi = mid
                    phi = tp[lo] + (tp[hi] - tp[lo]) * (r - tr[lo]) / (tr[hi] - tr[lo])
                if d < 0:
                    phi = -phi
                out[i] += phi
                out[j] -= phi
        for i in range(n):
            out[i] = out[i] / n
    return out_arr
