from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import CostModel, Estimator, Observation


@dataclass(frozen=True)
class ScaledBernoulliSpec:
    """Values m + (Z - 1/2) s with Z ~ Bernoulli(p)."""

    midpoint: float = 0.5
    scale: float = 0.5
    p: float = 0.5

    def __post_init__(self):
        if not 0 < self.scale < 1 + 1e-12:
            raise ValueError("scale must lie in (0, 1]")
        if not 0 <= self.p <= 1:
            raise ValueError("p must be a probability")

    @property
    def mean(self) -> float:
        return self.midpoint + (self.p - 0.5) * self.scale

    @property
    def variance(self) -> float:
        return self.scale**2 * self.p * (1 - self.p)

    @classmethod
    def with_variance(cls, variance: float, midpoint: float = 0.5) -> "ScaledBernoulliSpec":
        """Symmetric (p = 1/2) arm with the requested variance s^2 / 4."""
        return cls(midpoint, 2.0 * np.sqrt(variance), 0.5)


class ScaledBernoulli(Estimator):
    name = "scaled-bernoulli"
    chunk = 8192

    def __init__(self, spec: ScaledBernoulliSpec, cost: CostModel | None = None):
        super().__init__(cost)
        self.spec = spec
        self.true_mean = spec.mean
        self.true_variance = spec.variance
        self.value_range = (spec.midpoint - spec.scale / 2, spec.midpoint + spec.scale / 2)

    def values(self, rng, size):
        z = rng.random(size) < self.spec.p
        return self.spec.midpoint + (z - 0.5) * self.spec.scale


def sample_scaled_bernoulli(spec: ScaledBernoulliSpec, rng: np.random.Generator, cost: CostModel | None = None) -> Observation:
    return ScaledBernoulli(spec, cost).draw(rng)


class Constant(Estimator):
    """Deterministic arm; useful as a zero-variance reference."""

    name = "constant"

    def __init__(self, value: float, cost: CostModel | None = None):
        super().__init__(cost)
        self.value = float(value)
        self.true_mean = self.value
        self.true_variance = 0.0
        self.value_range = (self.value - 1.0, self.value + 1.0)

    def values(self, rng, size):
        return np.full(size, self.value)


class Gaussian(Estimator):
    """Unbounded N(mean, variance) arm."""

    name = "gaussian"

    def __init__(self, mean: float, variance: float, cost: CostModel | None = None):
        super().__init__(cost)
        self.true_mean = float(mean)
        self.true_variance = float(variance)

    def values(self, rng, size):
        return self.true_mean + np.sqrt(self.true_variance) * rng.standard_normal(size)
