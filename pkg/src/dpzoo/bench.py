"""Desk-scale benchmark objectives with known structure, plus seeded datasets.

Every objective evaluates rows independently and reduces with the
sequential kernels, so a loss value depends only on ``(theta, sample)`` and
never on how many points were evaluated together.
"""

import csv
import math
import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .estimator import LossEvaluator

# ---------------------------------------------------------------------------
# datasets


class Batch:
    """A minibatch: feature matrix plus label vector, iterable as (x, y) pairs."""

    def __init__(self, X, y):
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        self.y = np.asarray(y)

    def __len__(self):
        return self.X.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self.X[i], self.y[i]

    def __getitem__(self, i):
        return self.X[i], self.y[i]

    def __bool__(self):
        return len(self) > 0


def _as_batch(samples):
    if isinstance(samples, Batch):
        return samples
    xs, ys = zip(*samples)
    return Batch(np.stack(xs), np.asarray(ys))


@dataclass(eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    seed: int = 0
    generator: str = "external"

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]

    @property
    def samples(self):
        return list(Batch(self.X, self.y))

    def batch(self, indices):
        return Batch(self.X[indices], self.y[indices])

    def full(self):
        return Batch(self.X, self.y)

    def __eq__(self, other):
        return (isinstance(other, Dataset) and np.array_equal(self.X, other.X)
                and np.array_equal(self.y, other.y))


def _rng(generator, seed, n):
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(generator.encode()), n])


def write_dataset_csv(dataset, path):
    """Header ``f0,...,f{d-1},label``; floats in shortest round-trip form."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{j}" for j in range(dataset.dim)] + ["label"])
        for x, label in zip(dataset.X, dataset.y):
            w.writerow([repr(float(v)) for v in x] + [_format_label(label)])


def _format_label(label):
    if isinstance(label, (np.integer, int)):
        return str(int(label))
    return repr(float(label))


def read_dataset_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = len(header) - 1
    if header != [f"f{j}" for j in range(d)] + ["label"]:
        raise ValueError(f"{path}: unexpected header {header}")
    X = np.array([[float(v) for v in r[:d]] for r in body], dtype=np.float64).reshape(len(body), d)
    raw = [r[d] for r in body]
    try:
        y = np.array([int(v) for v in raw], dtype=np.int64)
    except ValueError:
        y = np.array([float(v) for v in raw], dtype=np.float64)
    return Dataset(X, y, generator="csv")


def make_separable_dataset(d, n, seed, margin=8.0):
    """Balanced +/-1 labels, separable along a hidden unit vector with the given margin."""
    if n < 2:
        raise ValueError("need at least two samples")
    rng = _rng("separable", seed, n)
    w = rng.normal(size=d)
    w /= np.linalg.norm(w)
    y = np.where(np.arange(n) % 2 == 0, 1, -1)
    y = y[rng.permutation(n)]
    z = rng.normal(size=(n, d))
    z -= np.outer(z @ w, w)
    along = y * (margin + np.abs(rng.normal(size=n)))
    X = z + np.outer(along, w)
    return Dataset(X, y.astype(np.int64), seed=seed, generator="separable")


def make_blobs(n, dim, classes, seed, spread=1.0):
    """Gaussian class clusters with unit-norm-ish centres scaled by 2."""
    rng = _rng("blobs", seed, n)
    centres = 2.0 * rng.normal(size=(classes, dim)) / math.sqrt(dim)
    y = np.arange(n) % classes
    y = y[rng.permutation(n)]
    X = centres[y] + spread * rng.normal(size=(n, dim)) / math.sqrt(dim)
    return Dataset(X, y.astype(np.int64), seed=seed, generator="blobs")


# ---------------------------------------------------------------------------
# layered parameter layout


@dataclass(frozen=True)
class LayeredShape:
    """Chain of weight matrices ``W_1 (n0 x n1), W_2 (n1 x n2), ...`` stored row-major."""

    layers: tuple

    def __post_init__(self):
        layers = tuple((int(r), int(c)) for r, c in self.layers)
        if not layers:
            raise ValueError("need at least one layer")
        for (_, c), (r, _) in zip(layers, layers[1:]):
            if c != r:
                raise ValueError(f"layers are not chain-compatible: {layers}")
        object.__setattr__(self, "layers", layers)

    @classmethod
    def from_dims(cls, dims):
        return cls(tuple(zip(dims[:-1], dims[1:])))

    @property
    def offsets(self):
        out, pos = [], 0
        for r, c in self.layers:
            out.append(pos)
            pos += r * c
        return tuple(out)

    @property
    def dim(self):
        return sum(r * c for r, c in self.layers)

    def slices(self):
        return [slice(o, o + r * c) for o, (r, c) in zip(self.offsets, self.layers)]

    def unflatten(self, theta):
        theta = np.asarray(theta)
        if theta.shape[-1] != self.dim:
            raise ValueError(f"theta has {theta.shape[-1]} entries, shape needs {self.dim}")
        lead = theta.shape[:-1]
        return [theta[..., s].reshape(lead + rc) for s, rc in zip(self.slices(), self.layers)]


# ---------------------------------------------------------------------------
# objectives


@dataclass
class BenchObjective:
    name: str
    loss: LossEvaluator
    dim: int
    analytic_gradient: Optional[Callable] = None
    lipschitz_L: Optional[float] = None
    weakly_convex_rho: Optional[float] = None
    shape: Optional[LayeredShape] = None
    minimizer: Optional[np.ndarray] = None
    init: Optional[np.ndarray] = field(default=None, repr=False)

    def mean_loss(self, theta, samples=(None,)):
        values = self.loss.evaluate_batch(np.asarray(theta, dtype=np.float64)[None, :], samples)
        return float(np.mean(values))

    def gradient_self_test(self, points=100, seed=0, samples=(None,)):
        """Worst relative error of the analytic gradient against central differences."""
        if self.analytic_gradient is None:
            raise ValueError(f"{self.name} has no analytic gradient")
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(points):
            theta = rng.normal(size=self.dim)
            if self.minimizer is not None:
                theta += self.minimizer
            h = 1e-6 * (1.0 + np.abs(theta))
            E = np.diag(h)
            fp = self.loss.evaluate_batch(theta[None, :] + E, samples).mean(axis=1)
            fm = self.loss.evaluate_batch(theta[None, :] - E, samples).mean(axis=1)
            fd = (fp - fm) / (2 * h)
            g = self.analytic_gradient(theta, samples)
            worst = max(worst, np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-300))
        return worst


class _DataFreeLoss(LossEvaluator):
    def _values(self, thetas):
        raise NotImplementedError

    def evaluate(self, theta, sample):
        return float(self._values(np.asarray(theta, dtype=np.float64)[None, :])[0])

    def evaluate_batch(self, thetas, samples):
        with np.errstate(over="ignore"):  # an infinite loss is reported by the estimator
            vals = self._values(np.ascontiguousarray(thetas, dtype=np.float64))
        return np.repeat(vals[:, None], len(samples), axis=1)


class QuadraticLoss(_DataFreeLoss):
    def __init__(self, eigenvalues, minimizer):
        self.a = eigenvalues
        self.opt = minimizer

    def _values(self, thetas):
        r = thetas - self.opt
        return 0.5 * kernels.seq_rowsum(np.ascontiguousarray(self.a * r * r))


def make_quadratic(d, condition_number, seed):
    """``0.5 (theta - theta*)^T A (theta - theta*)``, A diagonal, log-spaced spectrum in [1, cond]."""
    if d < 1:
        raise ValueError("d must be >= 1")
    if d == 1:
        eig = np.ones(1)
    else:
        eig = condition_number ** (np.arange(d) / (d - 1))
    opt = _rng("quadratic", seed, d).normal(size=d)
    loss = QuadraticLoss(eig, opt)
    return BenchObjective(
        name="quadratic", loss=loss, dim=d,
        analytic_gradient=lambda theta, samples=None: eig * (np.asarray(theta) - opt),
        minimizer=opt, init=np.zeros(d))


class NormLoss(_DataFreeLoss):
    def __init__(self, L, minimizer):
        self.L = L
        self.opt = minimizer
        self.lipschitz_hint = L

    def _values(self, thetas):
        r = thetas - self.opt
        return self.L * np.sqrt(kernels.seq_rowsum(np.ascontiguousarray(r * r)))


def make_lipschitz_norm(d, L, seed):
    """``L * ||theta - theta*||``: Lipschitz with constant exactly L."""
    if not L > 0:
        raise ValueError("L must be positive")
    opt = _rng("lipschitz_norm", seed, d).normal(size=d)

    def grad(theta, samples=None):
        r = np.asarray(theta) - opt
        nrm = np.linalg.norm(r)
        return np.zeros(d) if nrm == 0 else L * r / nrm

    return BenchObjective(name="lipschitz_norm", loss=NormLoss(L, opt), dim=d,
                          analytic_gradient=grad, lipschitz_L=L, minimizer=opt,
                          init=np.zeros(d))


class WeaklyConvexLogistic(LossEvaluator):
    """Logistic loss on +/-1 labels plus ``rho * sum theta_i^2 / (1 + theta_i^2)``."""

    def __init__(self, rho):
        self.rho = rho

    def evaluate(self, theta, sample):
        x, y = sample
        return float(self.evaluate_batch(np.asarray(theta)[None, :], Batch(x[None, :], [y]))[0, 0])

    def evaluate_batch(self, thetas, samples):
        b = _as_batch(samples)
        thetas = np.ascontiguousarray(thetas, dtype=np.float64)
        k, d = thetas.shape
        m = len(b)
        prod = thetas[:, None, :] * b.X[None, :, :]
        margins = kernels.seq_rowsum(prod.reshape(k * m, d)).reshape(k, m)
        data = np.logaddexp(0.0, -b.y[None, :] * margins)
        t2 = thetas * thetas
        reg = self.rho * kernels.seq_rowsum(np.ascontiguousarray(t2 / (1.0 + t2)))
        return data + reg[:, None]


def make_weakly_convex_logistic(d, n, rho, seed, margin=8.0):
    """Returns ``(objective, dataset)``; the regulariser makes the loss 2*rho-weakly convex."""
    data = make_separable_dataset(d, n, seed, margin=margin)
    loss = WeaklyConvexLogistic(rho)

    def grad(theta, samples=None):
        b = data.full() if samples is None else _as_batch(samples)
        theta = np.asarray(theta, dtype=np.float64)
        margins = b.X @ theta
        s = -b.y / (1.0 + np.exp(b.y * margins))
        return (s[:, None] * b.X).mean(axis=0) + rho * 2 * theta / (1 + theta * theta) ** 2

    init = 0.1 * _rng("logistic_init", seed, d).normal(size=d)
    obj = BenchObjective(name="weakly_convex_logistic", loss=loss, dim=d, analytic_gradient=grad,
                         weakly_convex_rho=2 * rho, shape=LayeredShape(((d, 1),)), init=init)
    return obj, data


def _softmax_xent(logits, y):
    top = logits.max(axis=-1, keepdims=True)
    z = logits - top
    lse = np.log(np.exp(z).sum(axis=-1))
    picked = np.take_along_axis(z, y[None, :, None], axis=-1)[..., 0]
    return lse - picked


class TinyMLP(LossEvaluator):
    """Forward-only bias-free MLP with per-sample cross-entropy."""

    def __init__(self, shape, activation="tanh", dtype=np.float64):
        if activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation {activation!r}")
        self.shape = shape
        self.activation = activation
        self.dtype = np.dtype(dtype)

    def _act(self, h):
        return np.tanh(h) if self.activation == "tanh" else np.maximum(h, 0)

    def logits(self, thetas, X):
        """Logits of shape (k, m, classes) for k parameter rows."""
        Ws = self.shape.unflatten(np.asarray(thetas, dtype=self.dtype))
        h = np.broadcast_to(np.asarray(X, dtype=self.dtype), (thetas.shape[0],) + X.shape)
        for W in Ws[:-1]:
            h = self._act(np.matmul(h, W))
        return np.matmul(h, Ws[-1])

    def evaluate(self, theta, sample):
        x, y = sample
        b = Batch(np.asarray(x)[None, :], np.asarray([y]))
        return float(self.evaluate_batch(np.asarray(theta)[None, :], b)[0, 0])

    def evaluate_batch(self, thetas, samples):
        b = _as_batch(samples)
        thetas = np.ascontiguousarray(thetas, dtype=np.float64)
        out = _softmax_xent(self.logits(thetas, b.X), b.y.astype(np.int64))
        return out.astype(np.float64)


def make_tiny_mlp(layer_dims, activation="tanh", seed=0, dtype=np.float64):
    """Returns ``(objective, shape)``; weights initialised N(0, 1/fan_in)."""
    if len(layer_dims) < 3:
        raise ValueError("need an input, at least one hidden layer and an output")
    shape = LayeredShape.from_dims(list(layer_dims))
    if shape.dim > 100_000:
        raise ValueError(f"{shape.dim} parameters exceeds the desk-scale cap of 1e5")
    rng = _rng("tiny_mlp", seed, shape.dim)
    init = np.concatenate([rng.normal(size=r * c) / math.sqrt(r) for r, c in shape.layers])
    obj = BenchObjective(name="tiny_mlp", loss=TinyMLP(shape, activation, dtype), dim=shape.dim,
                         shape=shape, init=init)
    return obj, shape
