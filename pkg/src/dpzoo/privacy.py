"""Scalar clipping, Gaussian noise on the clipped sum, and budget arithmetic.

The calibration constants ``c1``/``c2`` are never pinned down by the underlying
analysis; they are configuration values (default 1) and every calibration
reports whether its input lies inside the regime where the bound is claimed.
"""

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

from . import kernels
from .params import DOMAIN_NOISE, derive_key

logger = logging.getLogger(__name__)

INF = math.inf


class Calibration(NamedTuple):
    sigma: float
    valid: bool
    bound: float  # epsilon must stay below this for the guarantee to apply


@dataclass(frozen=True)
class PrivacySpec:
    epsilon: float
    delta: float
    clip_C: float
    c1: float = 1.0
    c2: float = 1.0
    sensitivity: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive (use math.inf for no privacy)")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not self.clip_C > 0:
            raise ValueError("clip threshold C must be positive")
        if self.c1 <= 0 or self.c2 <= 0 or self.sensitivity <= 0:
            raise ValueError("c1, c2 and the sensitivity multiplier must be positive")

    @property
    def private(self):
        return not math.isinf(self.epsilon)

    def check_delta(self, n):
        if self.delta >= 1.0 / n:
            logger.warning("delta=%g is not below 1/n=%g", self.delta, 1.0 / n)
            return False
        return True


def clip_scalar(g, C):
    """Scale ``g`` into [-C, C]: ``g / max(1, |g| / C)``."""
    if not C > 0:
        raise ValueError("C must be positive")
    return g / max(1.0, abs(g) / C)


def noise_draw(seed, stage, iteration, index):
    """Standard normal keyed by (seed, stage, iteration, direction index)."""
    key = derive_key(seed, DOMAIN_NOISE, stage, iteration, index)
    return float(kernels.ndtri(kernels.uniforms(key, 0, 1))[0])


def add_noise(total, sigma, C, key, index=0):
    """``total + sigma * C * z``; returns ``total`` untouched when sigma is 0.

    ``key`` is a :class:`~dpzoo.estimator.SamplingKey`; ``index`` selects the
    direction.
    """
    if sigma == 0:
        return total
    return total + sigma * C * noise_draw(key.seed, key.stage, key.iteration, index)


def amplify_by_subsampling(eps, delta, q):
    """Privacy of an (eps, delta) mechanism run on a q-fraction subsample."""
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    if q == 1:
        return eps, delta
    return math.log1p(q * math.expm1(eps)), q * delta


def strong_compose(eps, delta, T, delta_prime):
    """(eps_hat, delta_hat) after T adaptive (eps, delta) steps."""
    eps_hat = math.sqrt(2 * T * math.log(1 / delta_prime)) * eps + T * eps * math.expm1(eps)
    return eps_hat, T * delta + delta_prime


def calibrate_sigma_ma(eps, delta, T, q, c2=1.0, c1=1.0):
    """Noise multiplier ``c2 q sqrt(T log(1/delta)) / eps`` (moments accountant form)."""
    bound = c1 * q * q * T
    if math.isinf(eps):
        return Calibration(0.0, True, bound)
    sigma = c2 * q * math.sqrt(T * math.log(1 / delta)) / eps
    return Calibration(sigma, eps < bound, bound)


def calibrate_sigma_theorem1(eps, delta, T, P, m, n, c2=1.0, c1=1.0):
    """Noise multiplier for P noised directions per step over T steps.

    ``sigma = c2 P m sqrt(T log(P/delta)) / (eps n)``, valid for
    ``eps < c1 m^2 T / n^2``.
    """
    if m > n:
        raise ValueError("batch size m cannot exceed dataset size n")
    bound = c1 * m * m * T / (n * n)
    if math.isinf(eps):
        return Calibration(0.0, True, bound)
    sigma = c2 * P * m * math.sqrt(T * math.log(P / delta)) / (eps * n)
    return Calibration(sigma, eps < bound, bound)


def epsilon_theorem1(sigma, delta, T, P, m, n, c2=1.0):
    """Invert the direction-count calibration: epsilon implied by ``sigma`` after T steps."""
    if T == 0:
        return 0.0
    if sigma == 0:
        return INF
    return c2 * P * m * math.sqrt(T * math.log(P / delta)) / (sigma * n)


@dataclass
class BudgetLedger:
    """Running privacy bookkeeping for one optimizer run."""

    sigma: float
    P: int
    m: int
    n: int
    delta: float
    c2: float = 1.0
    steps_taken: int = 0

    @property
    def q(self):
        return self.m / self.n

    @property
    def spent_epsilon_estimate(self):
        return epsilon_theorem1(self.sigma, self.delta, self.steps_taken, self.P, self.m,
                                self.n, self.c2)

    def record_step(self):
        self.steps_taken += 1
        return self.spent_epsilon_estimate
