# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the routines in ``_pykernels``.

Built with ``-ffp-contract=off`` so that no multiply-add is fused; the
results must match the numpy fallback bit for bit.
"""

import numpy as np

from libc.math cimport log, sqrt, fabs
from libc.stdint cimport uint64_t

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t MIX2 = 0x94D049BB133111EBULL
cdef double TWO_M52 = 2.220446049250313e-16

cdef double[8] A = [3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
                    1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
                    3.3430575583588128105e4, 2.5090809287301226727e3]
cdef double[8] B = [1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
                    2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
                    5.2264952788528545610e3]
cdef double[8] C = [1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
                    3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
                    2.27238449892691845833e-2, 7.74545014278341407640e-4]
cdef double[8] D = [1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
                    1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
                    1.05075007164441684324e-9]
cdef double[8] E = [6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
                    2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
                    2.71155556874348757815e-5, 2.01033439929228813265e-7]
cdef double[8] F = [1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
                    7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
                    2.04426310338993978564e-15]


cdef inline double horner(double* coef, double r) nogil:
    cdef double acc = coef[7] * r + coef[6]
    cdef int k
    for k in range(5, -1, -1):
        acc = acc * r + coef[k]
    return acc


cdef inline uint64_t mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline double uniform_at(uint64_t key, uint64_t counter) nogil:
    cdef uint64_t bits = mix(key + (counter + 1) * GAMMA) >> 12
    return (<double>bits + 0.5) * TWO_M52


cdef inline double ndtri_one(double u) nogil:
    cdef double q = u - 0.5
    cdef double r, p, val
    if fabs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * horner(A, r) / horner(B, r)
    p = u if q < 0.0 else 1.0 - u
    r = sqrt(-log(p))
    if r <= 5.0:
        r = r - 1.6
        val = horner(C, r) / horner(D, r)
    else:
        r = r - 5.0
        val = horner(E, r) / horner(F, r)
    return -val if q < 0.0 else val


def uniforms(key, Py_ssize_t start, Py_ssize_t count):
    out = np.empty(count, dtype=np.float64)
    cdef double[::1] o = out
    cdef uint64_t k = key
    cdef Py_ssize_t i
    with nogil:
        for i in range(count):
            o[i] = uniform_at(k, <uint64_t>(start + i))
    return out


def ndtri(u):
    src = np.ascontiguousarray(u, dtype=np.float64)
    out = np.empty_like(src)
    cdef double[::1] s = src.reshape(-1)
    cdef double[::1] o = out.reshape(-1)
    cdef Py_ssize_t i
    with nogil:
        for i in range(s.shape[0]):
            o[i] = ndtri_one(s[i])
    return out


def fill_normals(keys, const double[::1] diag, double[:, ::1] out):
    cdef uint64_t[::1] ks = np.ascontiguousarray(keys, dtype=np.uint64)
    cdef Py_ssize_t p, i
    cdef Py_ssize_t d = diag.shape[0]
    cdef double z
    with nogil:
        for p in range(ks.shape[0]):
            for i in range(d):
                if diag[i] == 0.0:
                    out[p, i] = 0.0
                else:
                    z = ndtri_one(uniform_at(ks[p], <uint64_t>i))
                    out[p, i] = diag[i] * z
    return np.asarray(out)


def seq_sum(const double[::1] x):
    cdef Py_ssize_t i
    cdef double s
    if x.shape[0] == 0:
        return 0.0
    s = x[0]
    for i in range(1, x.shape[0]):
        s = s + x[i]
    return s


def seq_dot(const double[::1] a, const double[::1] b):
    cdef Py_ssize_t i
    cdef double s
    if a.shape[0] == 0:
        return 0.0
    s = a[0] * b[0]
    for i in range(1, a.shape[0]):
        s = s + a[i] * b[i]
    return s


def seq_rowsum(const double[:, ::1] x):
    cdef Py_ssize_t r, i
    out = np.zeros(x.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef double s
    if x.shape[1] == 0:
        return out
    for r in range(x.shape[0]):
        s = x[r, 0]
        for i in range(1, x.shape[1]):
            s = s + x[r, i]
        o[r] = s
    return out


def seq_accumulate(const double[::1] weights, const double[:, ::1] dirs, acc):
    cdef Py_ssize_t P = dirs.shape[0]
    cdef Py_ssize_t d = dirs.shape[1]
    cdef Py_ssize_t p, i, p0
    out = np.empty(d, dtype=np.float64)
    cdef double[::1] o = out
    cdef double[::1] a
    if acc is None:
        for i in range(d):
            o[i] = weights[0] * dirs[0, i]
        p0 = 1
    else:
        a = np.ascontiguousarray(acc, dtype=np.float64)
        for i in range(d):
            o[i] = a[i]
        p0 = 0
    for p in range(p0, P):
        for i in range(d):
            o[i] = o[i] + weights[p] * dirs[p, i]
    return out


def axpy(double alpha, const double[::1] x, const double[::1] y):
    cdef Py_ssize_t i
    out = np.empty(y.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    for i in range(y.shape[0]):
        o[i] = y[i] + alpha * x[i]
    return out
