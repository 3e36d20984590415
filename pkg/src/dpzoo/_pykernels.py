"""Pure numpy implementations of the hot kernels.

Every routine here has a twin in ``_ckernels.pyx``; both must produce
bit-identical results. That rules out pairwise reductions, BLAS calls and
fused multiply-adds: sums are accumulated left to right, and ``log`` is taken
from the C library via :func:`math.log` rather than numpy's SIMD variant.
"""

import math

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
MASK64 = 0xFFFFFFFFFFFFFFFF

_GAMMA = np.uint64(GAMMA)
_MIX1 = np.uint64(MIX1)
_MIX2 = np.uint64(MIX2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S12 = np.uint64(12)
_TWO_M52 = 2.0 ** -52

# Wichura, AS241 (PPND16): rational approximations to the normal quantile.
A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
     1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
     3.3430575583588128105e4, 2.5090809287301226727e3)
B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
     2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
     5.2264952788528545610e3)
C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
     3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
     2.27238449892691845833e-2, 7.74545014278341407640e-4)
D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
     1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
     1.05075007164441684324e-9)
E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
     2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
     2.71155556874348757815e-5, 2.01033439929228813265e-7)
F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
     7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
     2.04426310338993978564e-15)


def _horner(coef, r):
    acc = coef[7] * r + coef[6]
    for c in coef[5::-1]:
        acc = acc * r + c
    return acc


def splitmix64(x):
    """Finalizer of the splitmix64 generator on a Python int."""
    z = (x + GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def splitmix64_array(x):
    """Vectorised :func:`splitmix64` over a uint64 array."""
    with np.errstate(over="ignore"):
        return _mix_array(np.asarray(x, dtype=np.uint64) + _GAMMA)


def _mix_array(z):
    z = z ^ (z >> _S30)
    z = z * _MIX1
    z = z ^ (z >> _S27)
    z = z * _MIX2
    return z ^ (z >> _S31)


def uniforms(key, start, count):
    """Open-interval uniforms for counters ``start .. start+count-1`` of ``key``."""
    counters = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(key) + counters * _GAMMA
        bits = _mix_array(z) >> _S12
    return (bits.astype(np.float64) + 0.5) * _TWO_M52


def ndtri(u):
    """Standard normal quantile of an array of uniforms in (0, 1)."""
    u = np.asarray(u, dtype=np.float64)
    q = u - 0.5
    out = np.empty_like(q)
    central = np.abs(q) <= 0.425
    qc = q[central]
    r = 0.180625 - qc * qc
    out[central] = qc * _horner(A, r) / _horner(B, r)

    tail = ~central
    qt = q[tail]
    p = np.where(qt < 0.0, u[tail], 1.0 - u[tail])
    r = np.sqrt(-np.array([math.log(x) for x in p.tolist()], dtype=np.float64))
    near = r <= 5.0
    val = np.empty_like(r)
    rn = r[near] - 1.6
    val[near] = _horner(C, rn) / _horner(D, rn)
    rf = r[~near] - 5.0
    val[~near] = _horner(E, rf) / _horner(F, rf)
    out[tail] = np.where(qt < 0.0, -val, val)
    return out


def fill_normals(keys, diag, out):
    """Write ``diag[i] * z(keys[p], i)`` into ``out[p, i]``; zero where diag is zero."""
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.arange(1, diag.shape[0] + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = _mix_array(keys[:, None] + counters[None, :] * _GAMMA) >> _S12
    u = (bits.astype(np.float64) + 0.5) * _TWO_M52
    rows = diag[None, :] * ndtri(u.reshape(-1)).reshape(u.shape)
    rows[:, diag == 0.0] = 0.0
    out[...] = rows
    return out


def seq_sum(x):
    """Left-to-right sum of a 1-d array."""
    if x.shape[0] == 0:
        return 0.0
    return float(np.cumsum(x)[-1])


def seq_dot(a, b):
    return seq_sum(a * b)


def seq_rowsum(x):
    """Left-to-right sum along the last axis of a 2-d array."""
    if x.shape[1] == 0:
        return np.zeros(x.shape[0])
    return np.cumsum(x, axis=1)[:, -1].copy()


def seq_accumulate(weights, dirs, acc):
    """``acc + sum_p weights[p] * dirs[p]`` with p in ascending order.

    ``acc`` is None for a fresh accumulation, in which case the first term
    seeds the sum.
    """
    terms = weights[:, None] * dirs
    if acc is not None:
        terms = np.vstack([acc[None, :], terms])
    return np.cumsum(terms, axis=0)[-1].copy()


def axpy(alpha, x, y):
    return y + alpha * x
