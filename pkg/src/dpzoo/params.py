"""Flat parameter vectors, vector arithmetic and the keyed direction sampler.

A parameter vector is a contiguous 1-d ``float64`` numpy array. Reductions
run in ascending index order so results are reproducible bit for bit.

Random directions come from a counter-based stream: coordinate ``i`` of
direction ``p`` at ``(stage, iteration)`` is a pure function of
``(seed, stage, iteration, p, i)``. The uniform is the top 52 bits of a
splitmix64 hash mapped into (0, 1), and the normal is its quantile under
Wichura's AS241 approximation (relative error ~1e-16).
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._pykernels import MASK64, splitmix64, splitmix64_array
from .errors import DimensionError

# Stream domains keep directions, noise and minibatch draws independent.
DOMAIN_DIRECTION = 0
DOMAIN_NOISE = 1
DOMAIN_BATCH = 2
DOMAIN_INIT = 3


def derive_key(seed, *counters):
    """Fold ``seed`` and a tuple of non-negative counters into a 64-bit key."""
    h = splitmix64(int(seed) & MASK64)
    for c in counters:
        h = splitmix64(h ^ (int(c) & MASK64))
    return h


def as_parameter_vector(values, name="theta"):
    """Validate and return ``values`` as a contiguous float64 vector."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _check_same_dim(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")


def dot(a, b):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    _check_same_dim(a, b)
    return kernels.seq_dot(a, b)


def l2_norm(a):
    return float(np.sqrt(dot(a, a)))


def axpy(alpha, x, y):
    """Return ``y + alpha * x``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    _check_same_dim(x, y)
    return kernels.axpy(float(alpha), x, y)


@dataclass(frozen=True)
class Direction:
    values: np.ndarray
    index: int
    origin_seed: int

    @property
    def dim(self):
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class DirectionDistribution:
    """Masked, diagonally scaled standard normal: ``diag * N(0, I)``.

    ``upper`` is the largest diagonal value allowed (the interval bound A of a
    rank-based importance matrix; 1 for a plain mask).
    """

    mask: np.ndarray
    importance_diag: np.ndarray
    upper: float = field(default=1.0)

    def __post_init__(self):
        mask = np.ascontiguousarray(self.mask, dtype=bool)
        diag = np.ascontiguousarray(self.importance_diag, dtype=np.float64)
        if mask.ndim != 1 or mask.shape != diag.shape:
            raise DimensionError("mask and importance_diag must be 1-d of equal length")
        if np.any(diag[~mask] != 0.0):
            raise ValueError("importance_diag must be zero on masked-out coordinates")
        if np.any(diag < 0.0) or np.any(diag > self.upper):
            raise ValueError(f"importance_diag entries must lie in [0, {self.upper}]")
        mask.setflags(write=False)
        diag.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "importance_diag", diag)

    @classmethod
    def standard(cls, d):
        """Unmasked N(0, I_d)."""
        return cls(np.ones(d, dtype=bool), np.ones(d))

    @property
    def dim(self):
        return self.mask.shape[0]

    @property
    def kept(self):
        return int(self.mask.sum())

    def __eq__(self, other):
        if not isinstance(other, DirectionDistribution):
            return NotImplemented
        return (np.array_equal(self.mask, other.mask)
                and np.array_equal(self.importance_diag, other.importance_diag))

    def __hash__(self):
        return hash((self.mask.tobytes(), self.importance_diag.tobytes()))


def direction_keys(seed, stage, iteration, indices):
    """Stream keys of directions ``indices``; equals ``derive_key`` element-wise."""
    prefix = np.uint64(derive_key(seed, DOMAIN_DIRECTION, stage, iteration))
    return splitmix64_array(prefix ^ np.asarray(indices, dtype=np.uint64))


def sample_directions(dist, seed, stage, iteration, indices):
    """Directions for every index in ``indices`` as a (len(indices), d) array."""
    indices = np.asarray(indices, dtype=np.int64)
    if np.any(indices < 0):
        raise ValueError("direction indices must be non-negative")
    keys = direction_keys(seed, stage, iteration, indices)
    out = np.empty((indices.shape[0], dist.dim), dtype=np.float64)
    kernels.fill_normals(keys, dist.importance_diag, out)
    return out


def sample_direction(dist, seed, stage, iteration, index):
    values = sample_directions(dist, seed, stage, iteration, [index])[0]
    values.setflags(write=False)
    return Direction(values=values, index=int(index), origin_seed=int(seed))


def noise_normals(seed, stage, iteration, indices):
    """Scalar noise draws for directions ``indices``, one stream per direction."""
    prefix = np.uint64(derive_key(seed, DOMAIN_NOISE, stage, iteration))
    keys = splitmix64_array(prefix ^ np.asarray(indices, dtype=np.uint64))
    out = np.empty((keys.shape[0], 1), dtype=np.float64)
    kernels.fill_normals(keys, np.ones(1), out)
    return out[:, 0]


def batch_indices(seed, stage, iteration, n, m):
    """``m`` distinct record indices out of ``n`` for one optimizer step."""
    if not 1 <= m <= n:
        raise ValueError(f"batch size {m} must lie in [1, {n}]")
    rng = np.random.default_rng(derive_key(seed, DOMAIN_BATCH, stage, iteration))
    return np.sort(rng.permutation(n)[:m])
