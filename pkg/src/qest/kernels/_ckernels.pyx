# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sampling kernels; bit-identical to ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t
from libc.math cimport floor

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _key(uint64_t base, int64_t stream) noexcept nogil:
    return _mix(base ^ ((<uint64_t>stream + 1) * GOLDEN))


cdef inline double _uniform(uint64_t key, int64_t k) noexcept nogil:
    return <double>(_mix(key + (<uint64_t>k + 1) * GOLDEN) >> 11) * TWO_M53


cdef inline int64_t _invert(const double[::1] cdf, double u) noexcept nogil:
    # first index with cdf[i] > u, clipped to the last outcome
    cdef int64_t lo = 0, hi = cdf.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if cdf[mid] <= u:
            lo = mid + 1
        else:
            hi = mid
    if lo >= cdf.shape[0]:
        lo = cdf.shape[0] - 1
    return lo


def uniforms(seed, streams, Py_ssize_t count, int64_t start=0):
    cdef int64_t[::1] s = np.ascontiguousarray(streams, dtype=np.int64)
    cdef Py_ssize_t n = s.shape[0], i, j
    out = np.empty((n, count), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef uint64_t base = _mix(<uint64_t>seed + GOLDEN), key
    with nogil:
        for i in range(n):
            key = _key(base, s[i])
            for j in range(count):
                o[i, j] = _uniform(key, start + j)
    return out


def sample_categorical(cdf, seed, streams, Py_ssize_t draws, int64_t start=0):
    cdef double[::1] c = np.ascontiguousarray(cdf, dtype=np.float64)
    cdef int64_t[::1] s = np.ascontiguousarray(streams, dtype=np.int64)
    cdef Py_ssize_t n = s.shape[0], i, j
    out = np.empty((n, draws), dtype=np.int64)
    cdef int64_t[:, ::1] o = out
    cdef uint64_t base = _mix(<uint64_t>seed + GOLDEN), key
    with nogil:
        for i in range(n):
            key = _key(base, s[i])
            for j in range(draws):
                o[i, j] = _invert(c, _uniform(key, start + j))
    return out


def sample_counts(cdf, seed, streams, Py_ssize_t draws, int64_t start=0):
    cdef double[::1] c = np.ascontiguousarray(cdf, dtype=np.float64)
    cdef int64_t[::1] s = np.ascontiguousarray(streams, dtype=np.int64)
    cdef Py_ssize_t n = s.shape[0], i, j
    out = np.zeros((n, c.shape[0]), dtype=np.int64)
    cdef int64_t[:, ::1] o = out
    cdef uint64_t base = _mix(<uint64_t>seed + GOLDEN), key
    with nogil:
        for i in range(n):
            key = _key(base, s[i])
            for j in range(draws):
                o[i, _invert(c, _uniform(key, start + j))] += 1
    return out


def sq_errors(estimates, double theta, double period):
    cdef double[::1] e = np.ascontiguousarray(estimates, dtype=np.float64).ravel()
    cdef Py_ssize_t n = e.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double x, y, half = 0.5 * period
    with nogil:
        for i in range(n):
            x = e[i] - theta
            if period > 0:
                y = x + half
                x = y - period * floor(y / period) - half
            o[i] = x * x
    return out.reshape(np.shape(estimates))
