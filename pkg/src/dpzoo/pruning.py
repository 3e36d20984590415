"""Data-free SynFlow saliency estimated with two-point differences, and the
importance-weighted direction distribution built from it.

Nothing here accepts a dataset: saliency depends only on the weights, so the
resulting mask and diagonal carry no information about private records.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .estimator import FunctionLoss, SamplingKey, finite_diffs, map_blocks
from .params import DirectionDistribution, as_parameter_vector, sample_directions
from .stagewise import run_stagewise

MATRIX_TYPES = ("pruning-only", "rank-based")


def synflow_loss(theta, shape):
    """``1^T |W_1| |W_2| ... |W_L| 1``."""
    Ws = shape.unflatten(as_parameter_vector(theta))
    u = np.ones(shape.layers[0][0])
    for W in Ws:
        u = u @ np.abs(W)
    return float(u.sum())


def _synflow_rows(thetas, shape):
    Ws = shape.unflatten(thetas)
    u = np.ones((thetas.shape[0], 1, shape.layers[0][0]))
    for W in Ws:
        u = np.matmul(u, np.abs(W))
    return u[:, 0, :].sum(axis=1)


class SynFlowLoss(FunctionLoss):
    def __init__(self, shape):
        super().__init__(lambda theta, _: synflow_loss(theta, shape))
        self.shape = shape

    def evaluate_batch(self, thetas, samples):
        vals = _synflow_rows(np.ascontiguousarray(thetas, dtype=np.float64), self.shape)
        return np.repeat(vals[:, None], len(samples), axis=1)


def synflow_saliency_exact(theta, shape):
    """Analytic ``(dL/dtheta) * theta`` = ``left_a * |W[a, b]| * right_b`` per layer."""
    Ws = [np.abs(W) for W in shape.unflatten(as_parameter_vector(theta))]
    lefts = [np.ones(shape.layers[0][0])]
    for W in Ws[:-1]:
        lefts.append(lefts[-1] @ W)
    rights = [np.ones(shape.layers[-1][1])]
    for W in Ws[:0:-1]:
        rights.append(W @ rights[-1])
    rights = rights[::-1]
    return np.concatenate([(np.outer(l, r) * W).ravel() for l, W, r in zip(lefts, Ws, rights)])


@dataclass(frozen=True)
class SaliencyScore:
    values: np.ndarray
    beta_used: float
    P_used: int

    def layer_sums(self, shape):
        return [float(self.values[s].sum()) for s in shape.slices()]


def zo_saliency(theta, shape, P, beta, key, workers=1):
    """Mean two-point estimate of the SynFlow gradient over P standard-normal
    directions, multiplied elementwise by ``theta``."""
    if P < 1 or not beta > 0:
        raise ValueError("P must be >= 1 and beta > 0")
    theta = as_parameter_vector(theta)
    if theta.shape[0] != shape.dim:
        raise ValueError(f"theta has {theta.shape[0]} entries, shape needs {shape.dim}")
    loss = SynFlowLoss(shape)
    dist = DirectionDistribution.standard(shape.dim)

    def block(indices):
        dirs = sample_directions(dist, key.seed, key.stage, key.iteration, indices)
        diffs, _ = finite_diffs(loss, theta, dirs, beta, [None])
        return diffs[:, 0], dirs

    acc = None
    for weights, dirs in map_blocks(block, P, workers):
        acc = kernels.seq_accumulate(weights, dirs, acc)
    return SaliencyScore(values=(acc / P) * theta, beta_used=beta, P_used=P)


@dataclass(frozen=True)
class PruningConfig:
    rate_r: float
    matrix_type: str = "pruning-only"
    interval_A: float = 1.0
    interval_B: float = 1.0
    P: int = 1000
    beta: float = 1e-3

    def __post_init__(self):
        if not 0 < self.rate_r <= 1:
            raise ValueError("rate_r must lie in (0, 1]")
        if self.matrix_type not in MATRIX_TYPES:
            raise ValueError(f"matrix_type must be one of {MATRIX_TYPES}")
        if self.matrix_type == "rank-based" and not self.interval_A >= self.interval_B > 0:
            raise ValueError("rank-based importance needs A >= B > 0")

    def keep_count(self, d):
        # round away float noise first so e.g. 0.005 * 1000 gives 5, not 6
        return min(d, max(1, math.ceil(round(self.rate_r * d, 9))))


def build_importance_matrix(score, cfg):
    """Mask of the top ``ceil(r d)`` scores plus a per-coordinate scale.

    Ties are broken towards the lower flat index. Pruning-only scales every
    kept coordinate by 1; rank-based scales rank ``j`` (0 = highest score) by
    ``A - (A - B) j / K``.
    """
    values = np.asarray(score.values if isinstance(score, SaliencyScore) else score, dtype=np.float64)
    d = values.shape[0]
    K = cfg.keep_count(d)
    order = np.lexsort((np.arange(d), -values))[:K]
    mask = np.zeros(d, dtype=bool)
    mask[order] = True
    diag = np.zeros(d)
    if cfg.matrix_type == "pruning-only":
        diag[order] = 1.0
        upper = 1.0
    else:
        A, B = cfg.interval_A, cfg.interval_B
        diag[order] = A - (A - B) * np.arange(K) / K
        upper = A
    return DirectionDistribution(mask, diag, upper=max(upper, 1.0))


def prune(theta, shape, cfg, seed):
    """Saliency plus importance matrix: ``(DirectionDistribution, SaliencyScore)``."""
    score = zo_saliency(theta, shape, cfg.P, cfg.beta, SamplingKey(seed, 0, 0))
    return build_importance_matrix(score, cfg), score


def prune_then_finetune(theta, shape, cfg, loss, data, schedule, spec, P, m, seed, **kwargs):
    """Data-free pruning followed by stagewise private fine-tuning on the result.

    With ``cfg is None`` the pruning phase is skipped (full-parameter baseline).
    """
    if cfg is None:
        dist = DirectionDistribution.standard(theta.shape[0])
    else:
        dist, _ = prune(theta, shape, cfg, seed)
    return run_stagewise(theta, loss, data, schedule, spec, dist, P, m, seed, **kwargs), dist
