"""KL confidence interval for E[Q] Var[Y] from paired observations.

With Y_1..Y_2t and Q_1..Q_t in [0, 1], independent, the statistic

    vbar = (1 / 2t) sum_s Q_s (Y_2s - Y_2s-1)^2

has mean E[Q] Var[Y], and 2 vbar lies in [0, 1].  Treating 2 vbar like a
Bernoulli mean gives the interval

    {mu : KL(2 vbar, 2 mu) <= delta / floor(t / 2)}

where t counts observations (running estimates at odd t reuse t - 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bandits import kl_lower, kl_upper


@dataclass(frozen=True)
class PairedVarianceEstimate:
    """``t`` is the number of observations Y (twice the number of pairs)."""

    t: int
    vbar: float
    delta: float

    def __post_init__(self):
        if self.t < 0 or not 0 <= self.vbar <= 0.5 + 1e-12 or not self.delta >= 0:
            raise ValueError("need t >= 0, vbar in [0, 1/2] and delta >= 0")

    @property
    def budget(self) -> float:
        """delta / floor(t / 2); infinite before the first complete pair."""
        half = self.t // 2
        return self.delta / half if half else math.inf


def paired_variance_estimate(y, q, delta: float = 1.0) -> PairedVarianceEstimate:
    """vbar over consecutive pairs (y[0], y[1]), (y[2], y[3]), ... weighted by q."""
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    if y.ndim != 1 or q.ndim != 1 or y.size != 2 * q.size:
        raise ValueError(f"need len(y) == 2 len(q), got {y.size} and {q.size}")
    if np.any((y < 0) | (y > 1)) or np.any((q < 0) | (q > 1)):
        raise ValueError("y and q must lie in [0, 1]")
    if q.size == 0:
        return PairedVarianceEstimate(0, 0.0, delta)
    d = y[1::2] - y[0::2]
    return PairedVarianceEstimate(y.size, float(np.sum(q * d * d) / y.size), delta)


def running_vbar(y, q) -> np.ndarray:
    """vbar_t for t = 1..len(y), holding the previous value at odd t."""
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    m = q.size
    if y.size not in (2 * m, 2 * m + 1):
        raise ValueError("need one q per complete pair of y")
    d = y[1 : 2 * m : 2] - y[0 : 2 * m : 2]
    acc = np.cumsum(q * d * d) / (2.0 * np.arange(1, q.size + 1))
    out = np.zeros(y.size)
    out[1::2] = acc
    out[2::2] = acc[: (y.size - 1) // 2]
    return out


def variance_confidence_interval(est: PairedVarianceEstimate, tol: float = 1e-12) -> tuple[float, float]:
    """(inf, sup) of {mu : KL(2 vbar, 2 mu) <= delta / floor(t / 2)}."""
    p = min(2.0 * est.vbar, 1.0)
    b = est.budget
    if math.isinf(b):
        return 0.0, 0.5
    lo = float(kl_lower(p, b, tol=tol, max_iter=200))
    hi = float(kl_upper(p, b, tol=tol, max_iter=200))
    return 0.5 * lo, 0.5 * hi


def coverage_bound(delta: float, n: int) -> float:
    """1 - 2 e ceil(delta log floor(n / 2)) e^{-delta}, floored at 0."""
    half = n // 2
    if half < 2:
        return 0.0
    return max(0.0, 1.0 - 2.0 * math.e * math.ceil(delta * math.log(half)) * math.exp(-delta))
