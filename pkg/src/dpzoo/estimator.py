"""Two-point (SPSA) zeroth-order gradient estimation and the ZO-scale schedule."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .errors import DimensionError, EvaluationError
from .params import DirectionDistribution, as_parameter_vector, sample_directions

# Directions are generated and evaluated in fixed-size blocks. The block size,
# not the worker count, decides how work is split, so any number of workers
# yields the same bits.
BLOCK = 1024


class SamplingKey(NamedTuple):
    seed: int
    stage: int = 0
    iteration: int = 0


class LossEvaluator:
    """Per-sample loss ``f(theta, sample)``.

    Subclasses implement :meth:`evaluate`; overriding :meth:`evaluate_batch`
    with a vectorised version is optional but must give the same numbers.
    Objectives without data take ``sample=None``.
    """

    lipschitz_hint: Optional[float] = None

    def evaluate(self, theta, sample):
        raise NotImplementedError

    def evaluate_batch(self, thetas, samples):
        """Losses of shape (len(thetas), len(samples))."""
        out = np.empty((thetas.shape[0], len(samples)))
        for k in range(thetas.shape[0]):
            for i, sample in enumerate(samples):
                out[k, i] = self.evaluate(thetas[k], sample)
        return out


class FunctionLoss(LossEvaluator):
    """Wrap a plain callable ``fn(theta, sample) -> float``."""

    def __init__(self, fn, lipschitz_hint=None):
        self.fn = fn
        self.lipschitz_hint = lipschitz_hint

    def evaluate(self, theta, sample):
        return float(self.fn(theta, sample))


def _checked(values, points, samples):
    bad = ~np.isfinite(values)
    if bad.any():
        k, i = np.argwhere(bad)[0]
        raise EvaluationError(
            f"non-finite loss {float(values[k, i])!r} at point theta={points[k].tolist()} "
            f"(sample {i})")
    return values


def finite_diffs(loss, theta, dirs, beta, samples):
    """Two-point differences for every (direction, sample) pair.

    Returns ``(diffs, mean_losses)``, where ``diffs[p, i]`` is
    ``(f(theta + beta v_p, x_i) - f(theta - beta v_p, x_i)) / (2 beta)`` and
    ``mean_losses[p, i]`` averages the two evaluations.
    """
    plus = theta[None, :] + beta * dirs
    minus = theta[None, :] - beta * dirs
    fp = _checked(np.asarray(loss.evaluate_batch(plus, samples), dtype=np.float64), plus, samples)
    fm = _checked(np.asarray(loss.evaluate_batch(minus, samples), dtype=np.float64), minus, samples)
    with np.errstate(over="ignore"):  # overflow is reported by the caller's finiteness check
        return (fp - fm) / (2.0 * beta), 0.5 * (fp + fm)


def finite_diff(loss, theta, v, beta, sample):
    if beta <= 0:
        raise ValueError("beta must be positive")
    theta = as_parameter_vector(theta)
    v = getattr(v, "values", v)
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.shape != theta.shape:
        raise DimensionError(f"direction has dim {v.shape[0]}, theta has {theta.shape[0]}")
    diffs, _ = finite_diffs(loss, theta, v[None, :], beta, [sample])
    return float(diffs[0, 0])


def map_blocks(fn, P, workers=1):
    """Apply ``fn(indices)`` to consecutive index blocks; results in block order."""
    blocks = [np.arange(lo, min(lo + BLOCK, P)) for lo in range(0, P, BLOCK)]
    if workers <= 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, blocks))


def zo_gradient(loss, theta, batch, P, beta, dist, key, workers=1):
    """Non-private estimate ``(1/P) sum_p [(1/m) sum_i diff(v_p, x_i)] v_p``."""
    if not batch:
        raise ValueError("batch must be non-empty")
    if P < 1:
        raise ValueError("P must be positive")
    theta = as_parameter_vector(theta)
    if dist.dim != theta.shape[0]:
        raise DimensionError("distribution and theta dimensions differ")
    m = len(batch)

    def block(indices):
        dirs = sample_directions(dist, key.seed, key.stage, key.iteration, indices)
        diffs, _ = finite_diffs(loss, theta, dirs, beta, batch)
        return kernels.seq_rowsum(diffs) / m, dirs

    acc = None
    for weights, dirs in map_blocks(block, P, workers):
        acc = kernels.seq_accumulate(weights, dirs, acc)
    return acc / P


@dataclass(frozen=True)
class ZOScale:
    """Per-stage ZO scale ``beta_s = k * beta_{s-1}``."""

    beta0: float
    growth_k: float = 1.0
    beta_end: Optional[float] = None

    def __post_init__(self):
        if not self.beta0 > 0:
            raise ValueError("beta0 must be positive")
        if not self.growth_k >= 1:
            raise ValueError("growth_k must be >= 1")

    @classmethod
    def from_range(cls, beta0, beta_end, stages):
        """Geometric interpolation reaching ``beta_end`` at stage ``stages``."""
        if beta_end < beta0:
            raise ValueError("beta_end must be >= beta0")
        return cls(beta0, (beta_end / beta0) ** (1.0 / stages), beta_end)


def beta_at_stage(scale, s):
    """``beta0 * k**s`` by repeated multiplication, so the recurrence holds exactly."""
    if s < 0:
        raise ValueError("stage must be non-negative")
    beta = scale.beta0
    for _ in range(s):
        beta = scale.growth_k * beta
    return beta


def gaussian_smoothing(loss, theta, beta, draws, seed, sample=None):
    """Monte-Carlo ``f_beta(theta) = E f(theta + beta v)``: (mean, standard error)."""
    theta = as_parameter_vector(theta)
    dist = DirectionDistribution.standard(theta.shape[0])
    values = []
    for indices in (np.arange(lo, min(lo + BLOCK, draws)) for lo in range(0, draws, BLOCK)):
        dirs = sample_directions(dist, seed, 0, 0, indices)
        values.append(loss.evaluate_batch(theta[None, :] + beta * dirs, [sample])[:, 0])
    values = np.concatenate(values)
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(draws))
