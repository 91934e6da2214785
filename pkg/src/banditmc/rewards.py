"""Maps from raw estimator output (and costs) to [0, 1] bandit rewards."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


def uniform_reward(y):
    """1 - y^2 for observations already scaled into [0, 1]."""
    y = np.asarray(y, dtype=float)
    if np.any((y < 0) | (y > 1)):
        raise ValueError("observation outside [0, 1]; scale it with a RangeSpec first")
    out = 1.0 - y * y
    return out if out.ndim else float(out)


@dataclass
class RangeSpec:
    """Known per-arm observation ranges [a_k, b_k].

    By default rewards are measured from ``a_min = min_k a_k``.  Setting
    ``center`` measures squared deviations from that common point instead;
    any constant shared by all arms leaves the arm ordering unchanged, and a
    center near the target mean removes the mean^2 offset that otherwise
    swamps the variance differences.  ``clip`` clamps out-of-range
    observations into the range (counting them) rather than raising.
    """

    lower: np.ndarray
    upper: np.ndarray
    center: float | None = None
    clip: bool = False
    clipped: int = field(default=0, compare=False)

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        self.lower, self.upper = np.broadcast_arrays(self.lower, self.upper)
        self.lower, self.upper = self.lower.copy(), self.upper.copy()
        if np.any(self.lower >= self.upper):
            k = int(np.argmax(self.lower >= self.upper))
            raise ValueError(f"arm {k}: empty range [{self.lower[k]}, {self.upper[k]}]")
        if self.center is not None and not (self.lower.min() <= self.center <= self.upper.max()):
            raise ValueError("center must lie inside the union of the arm ranges")

    @classmethod
    def unit(cls, n_arms: int) -> "RangeSpec":
        return cls(np.zeros(n_arms), np.ones(n_arms))

    @property
    def a_min(self) -> float:
        return float(self.lower.min())

    @property
    def origin(self) -> float:
        return self.a_min if self.center is None else float(self.center)

    @property
    def width(self) -> np.ndarray:
        """Per-arm bound on |x - origin|."""
        o = self.origin
        return np.maximum(self.upper - o, o - self.lower)

    @property
    def width_sq(self) -> np.ndarray:
        return self.width**2


def range_scaled_reward(x, arm, spec: RangeSpec):
    """((b_k - a_min)^2 - (x - a_min)^2) / (b_k - a_min)^2, vectorised over
    ``x`` and ``arm``.  Uses ``spec.center`` in place of a_min when set."""
    x = np.asarray(x, dtype=float)
    arm = np.asarray(arm)
    lo, hi = spec.lower[arm], spec.upper[arm]
    out_of_range = (x < lo) | (x > hi)
    if np.any(out_of_range):
        if not spec.clip:
            i = np.flatnonzero(np.atleast_1d(out_of_range))[0]
            k = int(np.broadcast_to(arm, out_of_range.shape).ravel()[i])
            raise ValueError(
                f"arm {k}: observation {np.atleast_1d(x)[i]!r} outside its range "
                f"[{spec.lower[k]}, {spec.upper[k]}]"
            )
        spec.clipped += int(np.count_nonzero(out_of_range))
        x = np.clip(x, lo, hi)
    w2 = spec.width_sq[arm]
    out = np.clip((w2 - (x - spec.origin) ** 2) / w2, 0.0, 1.0)
    return out if out.ndim else float(out)


def scale_back_bound(bound, arm, spec: RangeSpec):
    """(b_k - a_min)^2 (B - 1): an upper bound on -E[(X - a_min)^2].

    ``bound`` is capped at 1 first.
    """
    b = np.minimum(np.asarray(bound, dtype=float), 1.0)
    out = spec.width_sq[np.asarray(arm)] * (b - 1.0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# cost-aware rewards
# ---------------------------------------------------------------------------


def paired_cost_reward(x1, x2, d1, d2):
    """-(d1 + d2)(x1 - x2)^2 / 4, an unbiased estimate of -delta_k V_k when
    costs are independent of the observations."""
    x1, x2, d1, d2 = (np.asarray(v, dtype=float) for v in (x1, x2, d1, d2))
    if np.any(d1 <= 0) or np.any(d2 <= 0):
        raise ValueError("costs must be positive")
    out = -0.25 * (d1 + d2) * (x1 - x2) ** 2
    return out if out.ndim else float(out)


@dataclass
class PairedRewardScale:
    """Caps used to squash the unbounded paired reward into [0, 1]."""

    d_max: float
    x_range: float
    clamped: int = field(default=0, compare=False)
    seen: int = field(default=0, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.d_max) and np.isfinite(self.x_range)) or self.d_max <= 0 or self.x_range <= 0:
            raise ValueError("d_max and x_range must be finite and positive")

    @property
    def floor(self) -> float:
        """Most negative raw reward representable without clamping."""
        return -0.5 * self.d_max * self.x_range**2

    @property
    def clamp_rate(self) -> float:
        return self.clamped / self.seen if self.seen else 0.0


def clamp_paired_to_unit(raw, scale: PairedRewardScale):
    """1 + raw / (d_max x_range^2 / 2), clamped to [0, 1]."""
    raw = np.asarray(raw, dtype=float)
    if np.any(raw > 0):
        raise ValueError("paired rewards are nonpositive")
    mapped = 1.0 + raw / (0.5 * scale.d_max * scale.x_range**2)
    low = mapped < 0
    scale.seen += raw.size
    if np.any(low):
        scale.clamped += int(np.count_nonzero(low))
        log.debug("clamped %d paired rewards below the scale floor", int(np.count_nonzero(low)))
    out = np.clip(mapped, 0.0, 1.0)
    return out if out.ndim else float(out)
