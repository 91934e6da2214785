from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

COST_KINDS = ("unit", "deterministic", "geometric", "lognormal", "wall-clock")


@dataclass(frozen=True)
class Observation:
    value: float
    cost: float = 1.0

    def __post_init__(self):
        if not self.cost > 0:
            raise ValueError(f"observation cost must be positive, got {self.cost!r}")


@dataclass(frozen=True)
class CostModel:
    """Distribution of the time D needed to produce one observation.

    ``mean`` is delta = E[D].  ``geometric`` models a rejection sampler: D is
    ``mean * p`` times a Geometric(p) trial count.  ``lognormal`` applies
    mean-one multiplicative jitter with log-scale ``sigma``.  ``wall-clock``
    charges the measured generation time (batch time split evenly).
    """

    kind: str = "unit"
    mean: float = 1.0
    p: float = 0.5
    sigma: float = 0.1

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ValueError(f"unknown cost model {self.kind!r}; expected one of {COST_KINDS}")
        if not self.mean > 0:
            raise ValueError("mean cost must be positive")
        if not 0 < self.p <= 1:
            raise ValueError("geometric success probability must lie in (0, 1]")

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "unit":
            return np.ones(size)
        if self.kind in ("deterministic", "wall-clock"):
            return np.full(size, float(self.mean))
        if self.kind == "geometric":
            return self.mean * self.p * rng.geometric(self.p, size)
        return self.mean * np.exp(self.sigma * rng.standard_normal(size) - 0.5 * self.sigma**2)


class Estimator:
    """An unbiased Monte Carlo procedure: one arm of the allocation problem.

    Subclasses implement ``values``; ``sample`` attaches costs.  ``true_mean``
    and ``true_variance`` are filled in when known analytically.
    """

    name = "estimator"
    chunk = 4096
    true_mean: float | None = None
    true_variance: float | None = None
    value_range: tuple[float, float] | None = None

    def __init__(self, cost: CostModel | None = None):
        self.cost = cost or CostModel()

    def values(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        if self.cost.kind == "wall-clock":
            start = time.perf_counter()
            vals = self.values(rng, size)
            elapsed = max(time.perf_counter() - start, 1e-9)
            return vals, np.full(size, elapsed / size)
        vals = self.values(rng, size)
        return vals, self.cost.draw(rng, size)

    def draw(self, rng: np.random.Generator) -> Observation:
        v, c = self.sample(rng, 1)
        return Observation(float(v[0]), float(c[0]))


class DrawBuffer:
    """Serves an estimator's iid stream in arbitrary counts, generating in chunks.

    With ``keep=True`` every generated draw is retained so that ``replay``
    can hand out further cursors over the *same* stream.  Replayed cursors
    see identical values (common random numbers across methods) while the
    estimator runs only once per draw.
    """

    def __init__(self, estimator: Estimator, rng: np.random.Generator, chunk: int | None = None, keep: bool = False):
        self.estimator = estimator
        self.chunk = int(chunk or estimator.chunk)
        self._store = _Store(estimator, rng, self.chunk, keep)
        self._pos = 0
        self.drawn = 0

    @property
    def rng(self) -> np.random.Generator:
        return self._store.rng

    def replay(self) -> "DrawBuffer":
        if not self._store.keep:
            raise ValueError("replay needs a buffer created with keep=True")
        other = object.__new__(DrawBuffer)
        other.estimator, other.chunk, other._store = self.estimator, self.chunk, self._store
        other._pos = 0
        other.drawn = 0
        return other

    def take(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        v, c = self._store.read(self._pos, k)
        self._pos += k
        self.drawn += k
        return v, c


class _Store:
    def __init__(self, estimator: Estimator, rng: np.random.Generator, chunk: int, keep: bool):
        self.estimator = estimator
        self.rng = rng
        self.chunk = chunk
        self.keep = keep
        self.vals = np.empty(0)
        self.costs = np.empty(0)
        self.offset = 0  # stream position of vals[0]

    def read(self, pos: int, k: int) -> tuple[np.ndarray, np.ndarray]:
        start = pos - self.offset
        if start < 0:
            raise ValueError("stream position already discarded")
        if not self.keep and start > 0:
            self.vals, self.costs = self.vals[start:], self.costs[start:]
            self.offset, start = pos, 0
        short = start + k - self.vals.size
        if short > 0:
            v, c = self.estimator.sample(self.rng, max(self.chunk, short))
            if not np.all(c > 0):
                raise RuntimeError(f"{self.estimator.name}: nonpositive cost drawn")
            self.vals = np.concatenate([self.vals, v])
            self.costs = np.concatenate([self.costs, c])
        return self.vals[start : start + k], self.costs[start : start + k]
