# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; semantics mirror ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log1p, pow, INFINITY, NAN

cnp.import_array()


def linear_assignment(cost):
    cdef double[:, ::1] a = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1]
    if n > m:
        raise ValueError("linear_assignment needs rows <= columns")
    cdef double[::1] u = np.zeros(n + 1)
    cdef double[::1] v = np.zeros(m + 1)
    cdef double[::1] minv = np.empty(m + 1)
    cdef Py_ssize_t[::1] p = np.zeros(m + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] way = np.zeros(m + 1, dtype=np.intp)
    cdef unsigned char[::1] used = np.zeros(m + 1, dtype=np.uint8)
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double delta, cur, ui0
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(m + 1):
            minv[j] = INFINITY
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            ui0 = u[i0]
            delta = INFINITY
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = a[i0 - 1, j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col = np.empty(n, dtype=np.int64)
    cdef long long[::1] colv = col
    for j in range(1, m + 1):
        if p[j]:
            colv[p[j] - 1] = j - 1
    return col


cdef inline double _excess(double p, double r) nogil:
    return (p + 1.0) * log1p(p) - p - r


def qhat_excess(double p, double r):
    return _excess(p, r)


def bisect_qhat(double r, double hi, double tol=1e-12, int max_iter=400):
    cdef double lo = 0.0, mid
    cdef int it
    if _excess(hi, r) < 0.0:
        return NAN
    for it in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _excess(mid, r) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sp1_candidates(cycles, capacitance, cpu_max, double rho1, double rho2):
    cdef double[::1] c = np.ascontiguousarray(cycles, dtype=np.float64)
    cdef double[::1] s = np.ascontiguousarray(capacitance, dtype=np.float64)
    cdef double[::1] fmax = np.ascontiguousarray(cpu_max, dtype=np.float64)
    cdef Py_ssize_t K = c.shape[0], l, k
    freqs_arr = np.empty((K, K))
    objective_arr = np.empty(K)
    cdef double[:, ::1] freqs = freqs_arr
    cdef double[::1] objective = objective_arr
    cdef double energy_coef = 0.0, cl, b1, b2, cap, fl, f, energy, latency, t
    for k in range(K):
        energy_coef += s[k] * c[k] * c[k] * c[k]
    for l in range(K):
        cl = c[l]
        b1 = rho2 * cl
        b2 = 2.0 * rho1 * energy_coef / (cl * cl)
        cap = INFINITY
        for k in range(K):
            t = cl * fmax[k] / c[k]
            if t < cap:
                cap = t
        if b2 > 0:
            fl = pow(b1 / b2, 1.0 / 3.0)
            if cap < fl:
                fl = cap
        else:
            fl = cap
        energy = 0.0
        latency = 0.0
        for k in range(K):
            f = c[k] * fl / cl
            freqs[l, k] = f
            energy += s[k] * c[k] * f * f
            t = c[k] / f
            if t > latency:
                latency = t
        objective[l] = rho1 * energy + rho2 * latency
    return freqs_arr, objective_arr
