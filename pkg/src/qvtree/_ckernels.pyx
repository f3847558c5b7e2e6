# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops in ``_pykernels``; same signatures."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def predict(const cnp.int64_t[:, :, ::1] t_idx, const double[:, :, ::1] t_prob,
            const double[::1] b, Py_ssize_t a):
    cdef Py_ssize_t n = b.shape[0], kk = t_idx.shape[2]
    cdef Py_ssize_t x, k
    cdef double bx
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    for x in range(n):
        bx = b[x]
        if bx == 0.0:
            continue
        for k in range(kk):
            o[t_idx[x, a, k]] += bx * t_prob[x, a, k]
    return out


def backproject(const cnp.int64_t[:, :, ::1] t_idx, const double[:, :, ::1] t_prob,
                const double[::1] h, Py_ssize_t a):
    cdef Py_ssize_t n = t_idx.shape[0], kk = t_idx.shape[2]
    cdef Py_ssize_t x, k
    cdef double acc
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for x in range(n):
        acc = 0.0
        for k in range(kk):
            acc += t_prob[x, a, k] * h[t_idx[x, a, k]]
        o[x] = acc
    return out


def fib_sweep(const cnp.int64_t[:, :, ::1] t_idx, const double[:, :, ::1] t_prob,
              const double[:, ::1] obs, const double[:, ::1] reward,
              const double[:, ::1] alpha, double gamma):
    cdef Py_ssize_t n = t_idx.shape[0], na = alpha.shape[0]
    cdef Py_ssize_t kk = t_idx.shape[2], nz = obs.shape[1]
    cdef Py_ssize_t x, a, k, z, c, y
    cdef double p, best, total
    weighted_arr = np.ascontiguousarray(
        np.asarray(obs)[:, :, None] * np.asarray(alpha).T[:, None, :])
    cdef double[:, :, ::1] w = weighted_arr
    scratch_arr = np.empty((nz, na), dtype=np.float64)
    cdef double[:, ::1] s = scratch_arr
    out = np.empty((na, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    for x in range(n):
        for a in range(na):
            s[:, :] = 0.0
            for k in range(kk):
                p = t_prob[x, a, k]
                if p == 0.0:
                    continue
                y = t_idx[x, a, k]
                for z in range(nz):
                    for c in range(na):
                        s[z, c] += p * w[y, z, c]
            total = 0.0
            for z in range(nz):
                best = s[z, 0]
                for c in range(1, na):
                    if s[z, c] > best:
                        best = s[z, c]
                total += best
            o[a, x] = reward[x, a] + gamma * total
    return out


cdef inline Py_ssize_t _first_above(const double[::1] cdf, double v) nogil:
    # first index with cdf[i] > v (binary search, cdf non-decreasing)
    cdef Py_ssize_t lo = 0, hi = cdf.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if cdf[mid] > v:
            hi = mid
        else:
            lo = mid + 1
    return lo


def sample_observations(const double[::1] b_cdf, const cnp.int64_t[:, :, ::1] t_idx,
                        const double[:, :, ::1] t_cdf, const double[:, ::1] obs_cdf,
                        Py_ssize_t a, const double[:, ::1] u):
    cdef Py_ssize_t n = u.shape[0], kk = t_idx.shape[2], nz = obs_cdf.shape[1]
    cdef Py_ssize_t i, x, k, y, z
    cdef double total = b_cdf[b_cdf.shape[0] - 1], v
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    with nogil:
        for i in range(n):
            x = _first_above(b_cdf, u[i, 0] * total)
            v = u[i, 1] * t_cdf[x, a, kk - 1]
            k = 0
            while k < kk - 1 and not (t_cdf[x, a, k] > v):
                k += 1
            y = t_idx[x, a, k]
            v = u[i, 2] * obs_cdf[y, nz - 1]
            z = 0
            while z < nz - 1 and not (obs_cdf[y, z] > v):
                z += 1
            o[i] = z
    return out
