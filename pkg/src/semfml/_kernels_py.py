"""Pure-Python reference versions of the compiled kernels in ``_kernels.pyx``.

Both modules expose the same functions with the same semantics; the
compiled one is preferred at import time (see ``semfml.kernels``).
"""
import math

import numpy as np


def linear_assignment(cost):
    """Minimum-cost assignment of every row to a distinct column.

    ``cost`` is n x m with n <= m. Shortest augmenting paths with dual
    potentials, O(n^2 m). Returns an int array ``col`` of length n.
    """
    a = np.asarray(cost, dtype=np.float64)
    n, m = a.shape
    if n > m:
        raise ValueError("linear_assignment needs rows <= columns")
    rows = a.tolist()
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    p = [0] * (m + 1)
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = rows[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
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
    for j in range(1, m + 1):
        if p[j]:
            col[p[j] - 1] = j - 1
    return col


def qhat_excess(p, r):
    """``(p+1) ln(p+1) - p - r``; increasing in p >= 0."""
    return (p + 1.0) * math.log1p(p) - p - r


def bisect_qhat(r, hi, tol=1e-12, max_iter=400):
    """Root of ``qhat_excess(., r)`` on [0, hi]; nan when not bracketed."""
    lo = 0.0
    if qhat_excess(hi, r) < 0.0:
        return math.nan
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if qhat_excess(mid, r) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sp1_candidates(cycles, capacitance, cpu_max, rho1, rho2):
    """Closed-form CPU frequencies for every hypothesised straggler.

    Returns ``(freqs, objective)``: row l of ``freqs`` is the frequency
    vector when SU l is the straggler, ``objective[l]`` its cost.
    """
    c = np.asarray(cycles, dtype=np.float64)
    s = np.asarray(capacitance, dtype=np.float64)
    fmax = np.asarray(cpu_max, dtype=np.float64)
    K = c.size
    energy_coef = float(np.sum(s * c ** 3))
    freqs = np.empty((K, K))
    objective = np.empty(K)
    for l in range(K):
        cl = c[l]
        b1 = rho2 * cl
        b2 = 2.0 * rho1 * energy_coef / cl ** 2
        cap = min(cl * fmax[k] / c[k] for k in range(K))
        fl = min((b1 / b2) ** (1.0 / 3.0), cap) if b2 > 0 else cap
        f = c * fl / cl
        freqs[l] = f
        objective[l] = rho1 * float(np.sum(s * c * f ** 2)) + rho2 * float(np.max(c / f))
    return freqs, objective
