"""Bandit policies on [0, 1] rewards.

All policies are batched: their state carries a leading *run* axis so that a
block of independent replicates can be advanced in lockstep.  A single run is
just ``n_runs=1``.  Every policy exposes the same two calls::

    arms = policy.select(t, rng)            # shape (n_runs,)
    policy.update(arms, rewards, rng)       # rewards in [0, 1]

Ties are broken towards the lowest arm index everywhere (``np.argmax``
returns the first maximiser).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

POLICY_KINDS = ("UCB1", "UCB-V", "KL-UCB", "TS")

# rewards this far outside [0, 1] are treated as float noise and clamped
_REWARD_SLACK = 1e-9


# ---------------------------------------------------------------------------
# running statistics
# ---------------------------------------------------------------------------


@dataclass
class ArmStatistics:
    """Running count / mean / sum of squared deviations, per arm.

    Fields are arrays of any common shape (scalars for a single arm).  The
    sample variance is ``m2 / count`` (zero for empty arms).
    """

    count: np.ndarray
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def zeros(cls, shape=()) -> "ArmStatistics":
        return cls(np.zeros(shape, dtype=np.int64), np.zeros(shape), np.zeros(shape))

    @classmethod
    def from_samples(cls, xs) -> "ArmStatistics":
        xs = np.asarray(xs, dtype=float)
        if xs.size == 0:
            return cls.zeros()
        mean = xs.mean()
        return cls(np.asarray(xs.size), np.asarray(mean), np.asarray(((xs - mean) ** 2).sum()))

    @property
    def variance(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.count > 0, self.m2 / np.maximum(self.count, 1), 0.0)

    def push(self, x: float) -> None:
        """Fold one observation into scalar statistics (Welford)."""
        n = self.count + 1
        delta = x - self.mean
        mean = self.mean + delta / n
        self.m2 = np.asarray(self.m2 + delta * (x - mean))
        self.mean = np.asarray(mean)
        self.count = np.asarray(n)

    def extend(self, xs) -> None:
        for x in np.asarray(xs, dtype=float).ravel():
            self.push(float(x))

    def update(self, index, x: np.ndarray) -> None:
        """Batched Welford update of the entries selected by ``index``.

        ``index`` must address each entry at most once (one pull per run).
        """
        n = self.count[index] + 1
        delta = x - self.mean[index]
        mean = self.mean[index] + delta / n
        self.m2[index] += delta * (x - mean)
        self.mean[index] = mean
        self.count[index] = n

    def merge(self, other: "ArmStatistics") -> "ArmStatistics":
        """Combine two disjoint chunks of the same stream (Chan et al.)."""
        n = self.count + other.count
        with np.errstate(invalid="ignore", divide="ignore"):
            delta = other.mean - self.mean
            safe_n = np.maximum(n, 1)
            mean = np.where(n > 0, self.mean + delta * other.count / safe_n, 0.0)
            m2 = self.m2 + other.m2 + delta**2 * self.count * other.count / safe_n
        return ArmStatistics(np.asarray(n), np.asarray(mean), np.asarray(m2))


# ---------------------------------------------------------------------------
# indices
# ---------------------------------------------------------------------------


def bernoulli_kl(p, q):
    """KL divergence between Bernoulli(p) and Bernoulli(q).

    Uses 0 log 0 = 0 and x log(x/0) = +inf for x > 0.  Vectorised.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
        t2 = np.where(p < 1, (1 - p) * (np.log1p(-p) - np.log1p(-q)), 0.0)
    out = t1 + t2
    # log(0) produced -inf above; only x>0 against q in {0,1} can diverge
    out = np.where(((p > 0) & (q <= 0)) | ((p < 1) & (q >= 1)), np.inf, out)
    out = np.maximum(out, 0.0)
    return out if out.ndim else float(out)


def _require_pulled(stats: ArmStatistics) -> None:
    if np.any(np.asarray(stats.count) < 1):
        raise ValueError("index requested for an arm with zero pulls; pull every arm once first")


def ucb1_index(stats: ArmStatistics, t) -> np.ndarray:
    _require_pulled(stats)
    return stats.mean + np.sqrt(2.0 * np.log(t) / stats.count)


def ucbv_index(stats: ArmStatistics, t, zeta: float = 1.0, c: float = 1.0) -> np.ndarray:
    """Empirical-Bernstein index with exploration function E = zeta * log t."""
    _require_pulled(stats)
    e = zeta * np.log(t)
    return stats.mean + np.sqrt(2.0 * stats.variance * e / stats.count) + c * 3.0 * e / stats.count


def klucb_exploration(t) -> np.ndarray:
    """f(t) = log t + 3 log log t for t >= 3, held at f(3) below."""
    t = np.maximum(np.asarray(t, dtype=float), 3.0)
    return np.log(t) + 3.0 * np.log(np.log(t))


def kl_upper(p, budget, tol: float = 1e-9, max_iter: int = 60) -> np.ndarray:
    """Largest q in [p, 1] with KL(p, q) <= budget, by bisection.

    Bisection stops once the bracket is narrower than ``tol * (1 - lo)``,
    which keeps the KL residual near ``tol`` even where KL(p, .) is steep
    close to 1, and never exceeds ``max_iter`` halvings.
    """
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    budget = np.broadcast_to(np.asarray(budget, dtype=float), p.shape)
    lo = p.copy()
    hi = np.ones_like(p)
    todo = (p < 1.0) & (budget > 0)
    for _ in range(max_iter):
        if not todo.any():
            break
        mid = 0.5 * (lo + hi)
        ok = bernoulli_kl(p, mid) <= budget
        lo = np.where(todo & ok, mid, lo)
        hi = np.where(todo & ~ok, mid, hi)
        todo &= (hi - lo) > tol * (1.0 - lo)
    return np.where(p >= 1.0, 1.0, lo)


def kl_lower(p, budget, tol: float = 1e-9, max_iter: int = 60) -> np.ndarray:
    """Smallest q in [0, p] with KL(p, q) <= budget (mirror of ``kl_upper``)."""
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    return 1.0 - kl_upper(1.0 - p, budget, tol, max_iter)


def klucb_index(stats: ArmStatistics, t, tol: float = 1e-9) -> np.ndarray:
    _require_pulled(stats)
    mean = np.clip(stats.mean, 0.0, 1.0)
    return kl_upper(mean, klucb_exploration(t) / stats.count, tol)


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------


@dataclass
class PolicyConfig:
    kind: str = "UCB1"
    ucbv_zeta: float = 1.0
    ucbv_c: float = 1.0
    klucb_tolerance: float = 1e-9
    ts_prior: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        kind = normalize_kind(self.kind)
        if kind is None:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        self.kind = kind
        if self.ucbv_zeta <= 0 or self.ucbv_c <= 0:
            raise ValueError("UCB-V zeta and c must be positive")
        if not 0 < self.klucb_tolerance <= 1e-6:
            raise ValueError("klucb_tolerance must lie in (0, 1e-6]")
        a, b = self.ts_prior
        if a <= 0 or b <= 0:
            raise ValueError("Thompson prior parameters must be positive")


def normalize_kind(name: str) -> str | None:
    key = name.upper().replace("_", "").replace("-", "")
    table = {"UCB1": "UCB1", "UCBV": "UCB-V", "KLUCB": "KL-UCB", "TS": "TS", "THOMPSON": "TS"}
    return table.get(key)


class Policy:
    """Base class: bookkeeping shared by every allocation rule.

    ``range_sq`` holds the squared per-arm reward ranges used to map a
    reward-space bound B back to the comparable scale ``range_sq * (B - 1)``.
    With equal ranges (the default) the map is monotone and is skipped.
    """

    name = "policy"

    def __init__(self, n_arms: int, n_runs: int = 1, range_sq=None):
        if n_arms < 1 or n_runs < 1:
            raise ValueError("need at least one arm and one run")
        self.n_arms = int(n_arms)
        self.n_runs = int(n_runs)
        self.range_sq = None
        if range_sq is not None:
            r = np.asarray(range_sq, dtype=float)
            if not np.allclose(r, r[0]):
                self.range_sq = r
        self.stats = ArmStatistics.zeros((self.n_runs, self.n_arms))
        self._rows = np.arange(self.n_runs)
        self._selected: np.ndarray | None = None

    def _scores(self, t: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _scale_back(self, bound: np.ndarray) -> np.ndarray:
        if self.range_sq is None:
            return bound
        return self.range_sq * (bound - 1.0)

    def select(self, t: int, rng: np.random.Generator) -> np.ndarray:
        arms = np.argmax(self._scores(t, rng), axis=1)
        self._selected = arms
        return arms

    def update(self, arms, rewards, rng: np.random.Generator | None = None, active=None) -> None:
        """Fold one reward per run; ``active`` masks runs that sit this round out."""
        arms = np.asarray(arms)
        rewards = np.asarray(rewards, dtype=float)
        rows = self._rows
        if active is not None:
            rows, arms, rewards = rows[active], arms[active], rewards[active]
        if self._selected is None or np.any(self._selected[rows] != arms):
            raise ValueError("update for an arm that was not the last selection")
        if np.any((rewards < -_REWARD_SLACK) | (rewards > 1 + _REWARD_SLACK)):
            bad = rewards[(rewards < -_REWARD_SLACK) | (rewards > 1 + _REWARD_SLACK)][0]
            raise ValueError(f"reward {bad!r} outside [0, 1]; the reward transform is misconfigured")
        rewards = np.clip(rewards, 0.0, 1.0)
        self._fold(rows, arms, rewards, rng)

    def _fold(self, rows, arms, rewards, rng) -> None:
        self.stats.update((rows, arms), rewards)

    @property
    def counts(self) -> np.ndarray:
        return self.stats.count


class _IndexPolicy(Policy):
    """UCB-family rule: unpulled arms first (lowest index), then argmax index."""

    def _index(self, t: int) -> np.ndarray:
        raise NotImplementedError

    def _scores(self, t, rng):
        unpulled = self.stats.count == 0
        if unpulled.any():
            with np.errstate(divide="ignore", invalid="ignore"):
                idx = self._scale_back(self._index_unchecked(t))
            return np.where(unpulled, np.inf, idx)
        return self._scale_back(self._index(t))

    def _index_unchecked(self, t):
        s = self.stats
        safe = ArmStatistics(np.maximum(s.count, 1), s.mean, s.m2)
        return self._index_of(safe, t)

    def _index(self, t):
        return self._index_of(self.stats, t)

    def _index_of(self, stats, t):
        raise NotImplementedError


class UCB1(_IndexPolicy):
    name = "UCB1"

    def _index_of(self, stats, t):
        return ucb1_index(stats, t)


class UCBV(_IndexPolicy):
    name = "UCB-V"

    def __init__(self, n_arms, n_runs=1, range_sq=None, zeta: float = 1.0, c: float = 1.0):
        super().__init__(n_arms, n_runs, range_sq)
        self.zeta = zeta
        self.c = c

    def _index_of(self, stats, t):
        return ucbv_index(stats, t, self.zeta, self.c)


class KLUCB(_IndexPolicy):
    name = "KL-UCB"

    def __init__(self, n_arms, n_runs=1, range_sq=None, tol: float = 1e-9):
        super().__init__(n_arms, n_runs, range_sq)
        self.tol = tol

    def _index_of(self, stats, t):
        return klucb_index(stats, t, self.tol)


@dataclass
class ThompsonState:
    """Beta-Bernoulli posterior counts per arm (arrays of shape (runs, arms))."""

    successes: np.ndarray
    failures: np.ndarray
    prior_alpha: float = 1.0
    prior_beta: float = 1.0

    @classmethod
    def fresh(cls, n_arms: int, n_runs: int = 1, prior=(1.0, 1.0)) -> "ThompsonState":
        shape = (n_runs, n_arms)
        return cls(np.zeros(shape, dtype=np.int64), np.zeros(shape, dtype=np.int64), *prior)


def beta_draw(a, b, rng: np.random.Generator) -> np.ndarray:
    """Beta(a, b) via the ratio of two Gamma variates."""
    g1 = rng.standard_gamma(a)
    g2 = rng.standard_gamma(b)
    return g1 / (g1 + g2)


def ts_sample(state: ThompsonState, rng: np.random.Generator) -> np.ndarray:
    return beta_draw(state.successes + state.prior_alpha, state.failures + state.prior_beta, rng)


def ts_record(state: ThompsonState, rows, arms, rewards, rng: np.random.Generator) -> None:
    """Resample rewards to coin flips and credit exactly one of S or F."""
    hit = rng.random(np.shape(rewards)) < rewards
    state.successes[rows, arms] += hit
    state.failures[rows, arms] += ~hit


def ts_select_and_update(state: ThompsonState, pull: Callable[[int], float], rng: np.random.Generator) -> int:
    """One full Thompson round for a single run: sample, play, resample, count."""
    arm = int(np.argmax(ts_sample(state, rng)[0]))
    reward = float(pull(arm))
    if not 0.0 <= reward <= 1.0:
        raise ValueError(f"reward {reward!r} outside [0, 1]")
    ts_record(state, np.array([0]), np.array([arm]), np.array([reward]), rng)
    return arm


class ThompsonSampling(Policy):
    name = "TS"

    def __init__(self, n_arms, n_runs=1, range_sq=None, prior=(1.0, 1.0)):
        super().__init__(n_arms, n_runs, range_sq)
        self.state = ThompsonState.fresh(n_arms, n_runs, prior)

    def _scores(self, t, rng):
        return self._scale_back(ts_sample(self.state, rng))

    def _fold(self, rows, arms, rewards, rng):
        if rng is None:
            raise ValueError("Thompson sampling needs a generator to resample rewards")
        super()._fold(rows, arms, rewards, rng)
        ts_record(self.state, rows, arms, rewards, rng)


class RoundRobin(Policy):
    """Deterministic cyclic allocation: arm (t - 1) mod K at round t."""

    name = "uniform"

    def _scores(self, t, rng):
        s = np.zeros((self.n_runs, self.n_arms))
        s[:, (t - 1) % self.n_arms] = 1.0
        return s


class FixedArm(Policy):
    """Always plays one arm; the single-estimator baseline."""

    def __init__(self, n_arms, n_runs=1, range_sq=None, arm: int = 0):
        super().__init__(n_arms, n_runs, range_sq)
        if not 0 <= arm < n_arms:
            raise ValueError(f"arm {arm} out of range")
        self.arm = arm
        self.name = f"arm{arm}"

    def _scores(self, t, rng):
        s = np.zeros((self.n_runs, self.n_arms))
        s[:, self.arm] = 1.0
        return s


def make_policy(spec, n_arms: int, n_runs: int = 1, range_sq=None) -> Policy:
    """Build a policy from a ``PolicyConfig`` or a name.

    Besides the four bandit rules, ``"uniform"`` gives round-robin and
    ``"arm<k>"`` a fixed-arm baseline.
    """
    if isinstance(spec, str):
        low = spec.lower()
        if low in ("uniform", "roundrobin", "round-robin"):
            return RoundRobin(n_arms, n_runs, range_sq)
        if low.startswith("arm") and low[3:].isdigit():
            return FixedArm(n_arms, n_runs, range_sq, arm=int(low[3:]))
        spec = PolicyConfig(kind=spec)
    if spec.kind == "UCB1":
        return UCB1(n_arms, n_runs, range_sq)
    if spec.kind == "UCB-V":
        return UCBV(n_arms, n_runs, range_sq, spec.ucbv_zeta, spec.ucbv_c)
    if spec.kind == "KL-UCB":
        return KLUCB(n_arms, n_runs, range_sq, spec.klucb_tolerance)
    return ThompsonSampling(n_arms, n_runs, range_sq, spec.ts_prior)


def ucb1_regret_envelope(gaps, n: int) -> float:
    """Finite-time UCB1 regret bound: sum over suboptimal arms of
    8 ln n / gap + (1 + pi^2 / 3) gap."""
    gaps = np.asarray(gaps, dtype=float)
    gaps = gaps[gaps > 0]
    return float(np.sum(8 * math.log(n) / gaps + (1 + math.pi**2 / 3) * gaps))
