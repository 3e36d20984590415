"""Private zeroth-order inner solver and the stagewise outer loop.

Each stage minimises ``f_beta_s(theta) + ||theta - anchor||^2 / (2 lambda)``
with a constant step size and ZO scale; between stages the iteration count
doubles, the step size halves and the ZO scale grows by ``k``.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .errors import NumericAbort
from .estimator import SamplingKey, ZOScale, beta_at_stage, finite_diffs, map_blocks, zo_gradient
from .params import as_parameter_vector, axpy, batch_indices, l2_norm, noise_normals, sample_directions
from .privacy import BudgetLedger, calibrate_sigma_ma, calibrate_sigma_theorem1
from .records import MetricsLog, MetricsRow

logger = logging.getLogger(__name__)

REG_MODES = ("directional", "paper-literal")


class StagePlan(NamedTuple):
    stage: int
    beta: float
    eta: float
    T: int

    @property
    def budget(self):
        """``eta * T``, identical for every stage of a schedule."""
        return self.eta * self.T


@dataclass(frozen=True)
class StageSchedule:
    lam: float
    S: int
    T0: int
    eta0: float
    zo_scale: ZOScale

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive (math.inf disables the proximal term)")
        if self.S < 1 or self.T0 < 1:
            raise ValueError("S and T0 must be positive")
        if not self.eta0 > 0:
            raise ValueError("eta0 must be positive")

    def stages(self):
        """Plans for stages 1..S from the doubling/halving/growth recurrences."""
        plans = []
        beta, eta, T = self.zo_scale.beta0, self.eta0, self.T0
        for s in range(1, self.S + 1):
            beta, eta, T = self.zo_scale.growth_k * beta, eta / 2, 2 * T
            plans.append(StagePlan(s, beta, eta, T))
        return plans

    @property
    def total_steps(self):
        return sum(p.T for p in self.stages())


@dataclass
class OptimizerState:
    theta: np.ndarray
    stage_anchor: np.ndarray
    seed: int
    ledger: BudgetLedger
    metrics: Optional[MetricsLog] = None
    stage: int = 1
    iteration: int = 0
    evaluations: int = field(default=0, repr=False)


def resolve_sigma(spec, T, P, m, n, route="theorem1"):
    """Noise multiplier for a run of T steps; returns a :class:`Calibration`."""
    if route == "theorem1":
        return calibrate_sigma_theorem1(spec.epsilon, spec.delta, T, P, m, n, spec.c2, spec.c1)
    if route == "ma":
        return calibrate_sigma_ma(spec.epsilon, spec.delta, T, m / n, spec.c2, spec.c1)
    raise ValueError(f"unknown calibration route {route!r}")


def dp_zoo_step(state, loss, batch, P, beta, eta, lam, spec, dist, reg_mode="directional",
                workers=1):
    """One private ZO step; updates ``state`` in place and returns it."""
    if reg_mode not in REG_MODES:
        raise ValueError(f"reg_mode must be one of {REG_MODES}")
    m = len(batch)
    if m < 1:
        raise ValueError("batch must be non-empty")
    if not eta > 0:
        raise ValueError("eta must be positive")
    theta = state.theta
    t = state.iteration + 1
    key = SamplingKey(state.seed, state.stage, t)
    C = spec.clip_C
    sigma = state.ledger.sigma
    noise_scale = sigma * C * spec.sensitivity
    prox = not math.isinf(lam)
    if prox:
        offset = theta - state.stage_anchor
        literal_term = l2_norm(offset) / lam

    def block(indices):
        dirs = sample_directions(dist, key.seed, key.stage, key.iteration, indices)
        diffs, means = finite_diffs(loss, theta, dirs, beta, batch)
        with np.errstate(invalid="ignore"):  # inf / inf becomes nan and aborts below
            terms = diffs / np.maximum(1.0, np.abs(diffs) / C)
        clipped = int(np.count_nonzero(np.abs(diffs) > C))
        if prox:
            if reg_mode == "directional":
                reg = kernels.seq_rowsum(np.ascontiguousarray(offset[None, :] * dirs)) / lam
                terms = terms + reg[:, None]
            else:
                terms = terms + literal_term
        sums = kernels.seq_rowsum(np.ascontiguousarray(terms))
        if sigma != 0:
            sums = sums + noise_scale * noise_normals(key.seed, key.stage, key.iteration, indices)
        return sums / m, dirs, clipped, float(means.sum())

    acc = None
    clipped = 0
    done = 0
    loss_sum = 0.0
    for weights, dirs, n_clip, block_loss in map_blocks(block, P, workers):
        bad = ~np.isfinite(weights)
        if bad.any():
            p = done + int(np.argmax(bad))
            raise NumericAbort(
                f"non-finite direction weight at stage {state.stage}, iteration {t}, "
                f"direction {p}", state.stage, t, p)
        acc = kernels.seq_accumulate(weights, dirs, acc)
        done += weights.shape[0]
        clipped += n_clip
        loss_sum += block_loss
    g = acc / P
    new = axpy(-eta, g, theta)
    if not np.all(np.isfinite(new)):
        raise NumericAbort(f"non-finite update at stage {state.stage}, iteration {t}",
                           state.stage, t, None)
    frozen = ~dist.mask
    new[frozen] = theta[frozen]

    state.theta = new
    state.iteration = t
    state.evaluations += 2 * P * m
    eps = state.ledger.record_step()
    if state.metrics is not None:
        state.metrics.append(MetricsRow(
            stage=state.stage, iteration=t, loss=loss_sum / (P * m), beta=beta, eta=eta,
            sigma=sigma, clip_fraction=clipped / (P * m), grad_norm_estimate=l2_norm(g),
            epsilon_spent_estimate=eps))
    return state


def _batch_for(data, seed, stage, t, m):
    if data is None:
        return [None]
    return data.batch(batch_indices(seed, stage, t, data.n, m))


def run_stage(state, loss, data, plan, spec, dist, P, m, reg_mode="directional", lam=math.inf,
              workers=1, average=False):
    """``plan.T`` private steps from ``state.theta`` anchored at ``state.stage_anchor``.

    Returns the state with ``theta`` and ``stage_anchor`` set to the stage output:
    the last iterate, or the running mean of iterates when ``average`` is set.
    """
    if plan.T < 1:
        raise ValueError("a stage needs at least one step")
    state.stage = plan.stage
    state.iteration = 0
    running = None
    for t in range(1, plan.T + 1):
        batch = _batch_for(data, state.seed, plan.stage, t, m)
        dp_zoo_step(state, loss, batch, P, plan.beta, plan.eta, lam, spec, dist, reg_mode, workers)
        if average:
            running = state.theta.copy() if running is None else running + (state.theta - running) / t
    out = running if average else state.theta
    state.theta = out.copy()
    state.stage_anchor = out.copy()
    return state


def run_stagewise(initial, loss, data, schedule, spec, dist, P, m, seed, reg_mode="directional",
                  workers=1, metrics=None, route="theorem1", average=False, sigma=None):
    """All S stages with geometric schedules; returns the final parameters.

    ``sigma`` overrides calibration; by default it is derived from ``spec``
    for the schedule's total step count.
    """
    theta = as_parameter_vector(initial)
    n = 1 if data is None else data.n
    m = 1 if data is None else m
    if sigma is None:
        sigma = resolve_sigma(spec, schedule.total_steps, P, m, n, route).sigma
    ledger = BudgetLedger(sigma=sigma, P=P, m=m, n=n, delta=spec.delta, c2=spec.c2)
    state = OptimizerState(theta=theta.copy(), stage_anchor=theta.copy(), seed=seed,
                           ledger=ledger, metrics=metrics)
    for plan in schedule.stages():
        logger.info("stage %d: beta=%.4g eta=%.4g T=%d", plan.stage, plan.beta, plan.eta, plan.T)
        run_stage(state, loss, data, plan, spec, dist, P, m, reg_mode, schedule.lam, workers,
                  average)
    return state.theta


def zo_sgd(initial, loss, data, T, beta, eta, P, m, dist, seed, stage=1, workers=1):
    """Plain non-private ZO-SGD over the same minibatch and direction streams."""
    theta = as_parameter_vector(initial).copy()
    for t in range(1, T + 1):
        batch = _batch_for(data, seed, stage, t, m)
        g = zo_gradient(loss, theta, batch, P, beta, dist, SamplingKey(seed, stage, t), workers)
        theta = axpy(-eta, g, theta)
    return theta


# ---------------------------------------------------------------------------
# theory-driven schedule (documentation utility, not used by the default loop)


@dataclass(frozen=True)
class TheoryParams:
    mu: float
    gamma: float
    lipschitz_L: float
    rho: float
    alpha0: float
    alpha_target: float

    def __post_init__(self):
        for name in ("mu", "gamma", "lipschitz_L", "rho", "alpha0", "alpha_target"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def theorem2_terms(tp, P, m, d, C, T, n, eps, delta, c2, beta_s):
    """The four step-size caps whose minimum (times alpha) sets eta_s."""
    L4 = tp.lipschitz_L ** 4
    return (
        P * m / (6 * tp.gamma ** 2),
        P * m * math.e / (48 * d * C ** 2),
        eps ** 2 * n ** 2 / (6 * d * c2 ** 2 * C ** 2 * P * T * math.log(P / delta)),
        P * m / (384 * d * beta_s ** 2 * L4),
    )


def theorem2_eta(tp, alpha_prev, P, m, d, C, T, n, eps, delta, c2, beta_s):
    return alpha_prev * min(theorem2_terms(tp, P, m, d, C, T, n, eps, delta, c2, beta_s))


def theorem2_schedule(tp, P, m, d, C, T, n, eps, delta, c2, zo_scale):
    """Per-stage (eta_s, T_s) with lambda = eta_s T_s = 3/(2 mu) and alpha halving.

    The stage count is ``ceil(log2(alpha0 / alpha_target))``. Returns
    ``(lam, [StagePlan, ...])``.
    """
    budget = 3.0 / (2.0 * tp.mu)
    S = max(1, math.ceil(math.log2(tp.alpha0 / tp.alpha_target)))
    plans = []
    alpha = tp.alpha0
    for s in range(1, S + 1):
        beta = beta_at_stage(zo_scale, s)
        eta = theorem2_eta(tp, alpha, P, m, d, C, T, n, eps, delta, c2, beta)
        plans.append(StagePlan(s, beta, eta, max(1, math.ceil(budget / eta))))
        alpha = alpha / 2
    return budget, plans
