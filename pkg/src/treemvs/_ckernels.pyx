# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: full-tree sweep and batched episode simulation.

Semantics match ``treemvs._pykernels`` operation for operation, so the two
backends agree to the last bit on everything except ``pow`` (pmean), where
libm and numpy may differ by an ulp.
"""
import numpy as np

cimport numpy as cnp
from cython.parallel cimport parallel, prange
from libc.math cimport fabs, pow
from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport free, malloc

cnp.import_array()

NAME = "cython"

DEF PMEAN_MAX_ITER = 200
cdef double PMEAN_TOL = 1e-13
cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL


cdef inline double _sum(const double* x, int m) noexcept nogil:
    cdef double s = x[0]
    cdef int d
    for d in range(1, m):
        s += x[d]
    return s


cdef inline double _median(const double* x, int m, double* buf) noexcept nogil:
    cdef int a, b
    cdef double v
    for a in range(m):
        buf[a] = x[a]
    for a in range(1, m):
        v = buf[a]
        b = a - 1
        while b >= 0 and buf[b] > v:
            buf[b + 1] = buf[b]
            b -= 1
        buf[b + 1] = v
    if m % 2 == 1:
        return buf[m // 2]
    return 0.5 * (buf[m // 2 - 1] + buf[m // 2])


cdef inline double _sgnpow(double d, double q) noexcept nogil:
    if d > 0:
        return pow(d, q)
    if d < 0:
        return -pow(-d, q)
    return 0.0


cdef inline double _pmean(const double* x, int m, double p, double lo, double hi) noexcept nogil:
    cdef double q = p - 1.0
    cdef double mid, g
    cdef double tol = PMEAN_TOL * (hi - lo if hi - lo < 1.0 else 1.0)
    cdef int it, d
    if not hi > lo:
        return 0.5 * (lo + hi)
    for it in range(PMEAN_MAX_ITER):
        mid = 0.5 * (lo + hi)
        g = _sgnpow(x[0] - mid, q)
        for d in range(1, m):
            g = g + _sgnpow(x[d] - mid, q)
        if g == 0.0:
            lo = mid
            hi = mid
            break
        if g > 0.0:
            if mid <= lo:
                break
            lo = mid
        else:
            if mid >= hi:
                break
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi)


cdef inline double _apply(int code, double alpha, double p, const double* x, int m, double* buf) noexcept nogil:
    cdef double mx = x[0]
    cdef double mn = x[0]
    cdef double out
    cdef int d
    for d in range(1, m):
        if x[d] > mx:
            mx = x[d]
        if x[d] < mn:
            mn = x[d]
    if code == 0:
        out = _sum(x, m) / m
    elif code == 1:
        out = 0.5 * (mx + mn)
    elif code == 2:
        out = (0.5 * alpha) * (mx + mn) + (1.0 - alpha) * _sum(x, m) / m
    elif code == 3:
        out = alpha * _median(x, m, buf) + (1.0 - alpha) * _sum(x, m) / m
    elif code == 4:
        out = alpha * _median(x, m, buf) + (0.5 * (1.0 - alpha)) * (mx + mn)
    else:
        out = _pmean(x, m, p, mn, mx)
    if out < mn:
        out = mn
    if out > mx:
        out = mx
    return out


def apply_operator(int code, double alpha, double p, double[:, ::1] X):
    """Row-wise operator evaluation (for cross-checking the numpy path)."""
    cdef Py_ssize_t n = X.shape[0]
    cdef int m = X.shape[1]
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double* buf = <double*> malloc(m * sizeof(double))
    cdef Py_ssize_t r
    try:
        for r in range(n):
            o[r] = _apply(code, alpha, p, &X[r, 0], m, buf)
    finally:
        free(buf)
    return out


def sweep(double[:, ::1] src, double[:, ::1] dst, const int64_t[::1] offsets, int L, int m,
          const int64_t[::1] op_codes, const double[::1] op_alpha, const double[::1] op_p,
          const double[:, ::1] beta, const double[:, :, ::1] G, bint gauss_seidel, int nthreads=1):
    """See ``treemvs._pykernels.sweep``."""
    cdef int N = src.shape[0]
    cdef int k, i, j
    cdef Py_ssize_t a, n, r, node, child, par
    cdef double change = 0.0
    cdef double bk, F, pv, v, lo, hi, acc, diff
    cdef double* upd
    cdef double* buf
    cdef double[:, ::1] csrc = dst if gauss_seidel else src
    if nthreads < 1:
        nthreads = 1
    for k in range(L - 1, -1, -1):
        a = offsets[k]
        n = offsets[k + 1] - a
        with nogil, parallel(num_threads=nthreads):
            # per-thread scratch: N uncoupled updates, N coupled, m for sorting
            upd = <double*> malloc((2 * N + m) * sizeof(double))
            buf = upd + 2 * N
            for r in prange(n, schedule="static"):
                node = a + r
                child = offsets[k + 1] + r * m
                for i in range(N):
                    F = _apply(<int> op_codes[i], op_alpha[i], op_p[i], &csrc[i, child], m, buf)
                    bk = beta[i, k]
                    if k > 0 and bk != 0.0:
                        par = offsets[k - 1] + r // m
                        pv = src[i, par]
                        v = (1.0 - bk) * F + bk * pv
                        lo = F if F < pv else pv
                        hi = pv if F < pv else F
                        if v < lo:
                            v = lo
                        if v > hi:
                            v = hi
                        upd[i] = v
                    else:
                        upd[i] = F
                lo = upd[0]
                hi = upd[0]
                for i in range(1, N):
                    if upd[i] < lo:
                        lo = upd[i]
                    if upd[i] > hi:
                        hi = upd[i]
                for i in range(N):
                    acc = G[k, i, 0] * upd[0]
                    for j in range(1, N):
                        acc = acc + G[k, i, j] * upd[j]
                    if acc < lo:
                        acc = lo
                    if acc > hi:
                        acc = hi
                    upd[N + i] = acc
                for i in range(N):
                    dst[i, node] = upd[N + i]
            free(upd)
        # serial reduction keeps the result independent of thread count
        for r in range(n):
            for i in range(N):
                diff = fabs(dst[i, a + r] - src[i, a + r])
                if diff > change:
                    change = diff
    return change


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def episode_keys(uint64_t seed, episodes):
    cdef const int64_t[::1] e = np.ascontiguousarray(episodes, dtype=np.int64)
    cdef Py_ssize_t n = e.shape[0], r
    out = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef uint64_t base = _mix(seed + GAMMA)
    for r in range(n):
        o[r] = _mix(base + (<uint64_t> e[r] + 1) * GAMMA)
    return out


def simulate(uint64_t seed, episodes, int start_level, int64_t start_index, int start_board,
             int L, int m, const double[:, :, ::1] thresholds, const int64_t[:, ::1] targets,
             const int64_t[::1] mechanism, const int64_t[:, ::1] argmax,
             const int64_t[:, ::1] argmin, const int64_t[::1] offsets,
             const double[:, ::1] leaf, int64_t step_cap, int nthreads=1):
    """See ``treemvs._pykernels.simulate``."""
    cdef const int64_t[::1] eps = np.ascontiguousarray(episodes, dtype=np.int64)
    cdef Py_ssize_t n = eps.shape[0], r
    payoff_arr = np.zeros(n)
    steps_arr = np.zeros(n, dtype=np.int64)
    cdef double[::1] payoff = payoff_arr
    cdef int64_t[::1] steps = steps_arr
    cdef int N = thresholds.shape[0]
    cdef int K = thresholds.shape[2]
    cdef uint64_t base = _mix(seed + GAMMA)
    cdef uint64_t key
    cdef int lev, brd, c, slot, digit
    cdef int64_t idx, t
    cdef double u
    if nthreads < 1:
        nthreads = 1
    with nogil:
        for r in prange(n, num_threads=nthreads, schedule="static"):
            key = _mix(base + (<uint64_t> eps[r] + 1) * GAMMA)
            lev = start_level
            idx = start_index
            brd = start_board
            t = 0
            while lev < L:
                if t >= step_cap:
                    t = -1
                    break
                u = <double> (_mix(key + (<uint64_t> (t + 1)) * GAMMA) >> 11) * (1.0 / 9007199254740992.0)
                c = K - 1
                for slot in range(K):
                    if u < thresholds[brd, lev, slot]:
                        c = slot
                        break
                if c < N - 1:
                    brd = <int> targets[brd, c]
                elif c == N - 1:
                    lev = lev - 1
                    idx = idx // m
                else:
                    slot = c - N
                    if mechanism[brd] == 0:
                        if slot == 0:
                            digit = <int> argmax[brd, offsets[lev] + idx]
                        else:
                            digit = <int> argmin[brd, offsets[lev] + idx]
                    else:
                        digit = slot
                    lev = lev + 1
                    idx = idx * m + digit
                t = t + 1
            steps[r] = t
            if t >= 0:
                payoff[r] = leaf[brd, idx]
    return payoff_arr, steps_arr
