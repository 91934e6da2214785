"""Sequential allocation among unbiased estimators.

Two loops drive a bandit policy with draws from the arms:

* ``uniform_cost_batch`` treats every draw as costing one unit.  Round t
  pulls the selected arm once and feeds the policy the range-scaled reward
  built from 1 - y^2, so the arm with the smallest second moment about the
  reward origin (hence the smallest variance, for a common mean) has the
  largest expected reward.
* ``cost_aware_batch`` spends a time budget.  Each decision is used for two
  consecutive draws, and the pair reward -(d1 + d2)(x1 - x2)^2 / 4 (expected
  value -delta V) is squashed into [0, 1] and fed back once per pair.

Both loops advance a block of independent runs in lockstep.  Each arm owns
one ``DrawBuffer`` per block; in every round the runs that picked arm k take
the next draws of that arm's stream in ascending run order.  The draws a run
receives do not depend on values it has not seen, so the runs remain
independent, and the whole block is a deterministic function of its seeds.

``run_uniform_cost`` and ``run_cost_aware`` are single-run conveniences that
return a full ``AllocationRun`` trace.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .bandits import ArmStatistics, Policy, make_policy
from .estimators.base import DrawBuffer, Estimator
from .rewards import PairedRewardScale, RangeSpec, clamp_paired_to_unit, paired_cost_reward, range_scaled_reward

WEIGHT_VARIANCE_FLOOR = 1e-12
TRACE_COLUMNS = ("round", "arm", "value", "cost", "reward", "J_m")


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------


@dataclass
class AllocationRun:
    """Trace of one sequential run.

    Arrays are indexed by draw.  ``rounds`` holds the policy decision that
    produced each draw (two draws share a decision in the cost-aware loop),
    ``rewards`` the reward fed to the policy for that decision, and
    ``renewal`` the completion times J_m = D_1 + ... + D_m.
    """

    choices: np.ndarray
    values: np.ndarray
    costs: np.ndarray
    rewards: np.ndarray
    rounds: np.ndarray
    n_arms: int
    budget: float | None = None

    def __post_init__(self):
        self.choices = np.asarray(self.choices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        self.costs = np.asarray(self.costs, dtype=float)
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.rounds = np.asarray(self.rounds, dtype=np.int64)
        n = self.choices.size
        if not all(a.size == n for a in (self.values, self.costs, self.rewards, self.rounds)):
            raise ValueError("trace columns must have equal length")

    def __len__(self) -> int:
        return self.choices.size

    @property
    def renewal(self) -> np.ndarray:
        return np.cumsum(self.costs)

    @property
    def partial_sums(self) -> np.ndarray:
        return np.cumsum(self.values)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.choices, minlength=self.n_arms)

    def completed(self, t: float) -> int:
        """N(t) - 1: draws finished by time t (J_m <= t)."""
        return int(np.searchsorted(self.renewal, t, side="right"))

    def estimate_at(self, t: float) -> float:
        """S(t) / (N(t) - 1), or 0 before the first draw completes."""
        m = self.completed(t)
        return float(self.partial_sums[m - 1] / m) if m else 0.0

    @property
    def estimate(self) -> float:
        """Sample mean of the draws that count: all of them for a fixed
        number of rounds, those finished within the budget otherwise."""
        if self.budget is not None:
            return self.estimate_at(self.budget)
        return float(self.values.mean()) if len(self) else 0.0

    def arm_statistics(self, upto: int | None = None) -> ArmStatistics:
        """Per-arm count / mean / m2 of the raw values among the first ``upto`` draws."""
        m = len(self) if upto is None else upto
        ch, v = self.choices[:m], self.values[:m]
        count = np.bincount(ch, minlength=self.n_arms)
        total = np.bincount(ch, weights=v, minlength=self.n_arms)
        mean = np.divide(total, count, out=np.zeros(self.n_arms), where=count > 0)
        m2 = np.bincount(ch, weights=(v - mean[ch]) ** 2, minlength=self.n_arms)
        return ArmStatistics(count, mean, m2)

    def combined(self) -> "CombinedEstimate":
        m = len(self) if self.budget is None else self.completed(self.budget)
        return combine(self.arm_statistics(m))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        J = self.renewal
        for i in range(len(self)):
            w.writerow([int(self.rounds[i]), int(self.choices[i]), repr(float(self.values[i])),
                        repr(float(self.costs[i])), repr(float(self.rewards[i])), repr(float(J[i]))])
        return buf.getvalue()

    @classmethod
    def read_csv(cls, path, n_arms: int, budget: float | None = None) -> "AllocationRun":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        col = lambda k, t=float: np.array([t(r[k]) for r in rows])  # noqa: E731
        return cls(col("arm", int), col("value"), col("cost"), col("reward"), col("round", int), n_arms, budget)


# ---------------------------------------------------------------------------
# combining
# ---------------------------------------------------------------------------


@dataclass
class CombinedEstimate:
    uniform_mean: np.ndarray
    weighted_mean: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    counts: np.ndarray


def combine(stats: ArmStatistics) -> CombinedEstimate:
    """Unweighted and inverse-variance weighted averages of per-arm draws.

    Works on statistics with any leading shape; the arm axis is last.  The
    weighted estimate gives arm k weight T_k / v_k, with v_k the unbiased
    per-arm sample variance floored at ``WEIGHT_VARIANCE_FLOOR``.  Arms
    with fewer than two draws have no variance estimate and get weight 0;
    if no arm qualifies the weighted estimate falls back to the unweighted
    one.
    """
    count = np.asarray(stats.count, dtype=float)
    mean = np.asarray(stats.mean, dtype=float)
    m2 = np.asarray(stats.m2, dtype=float)
    total = count.sum(axis=-1)
    uniform = np.divide((count * mean).sum(axis=-1), total, out=np.zeros(np.shape(total)), where=total > 0)
    var = np.divide(m2, count - 1, out=np.zeros_like(m2), where=count > 1)
    w = np.where(count > 1, count / np.maximum(var, WEIGHT_VARIANCE_FLOOR), 0.0)
    wsum = w.sum(axis=-1)
    weighted = np.divide((w * mean).sum(axis=-1), wsum, out=np.array(uniform, dtype=float, copy=True), where=wsum > 0)
    return CombinedEstimate(uniform, weighted, mean, var, count)


def weighted_mean(means, counts, variances) -> float:
    """sum_k (T_k / v_k) xbar_k / sum_k (T_k / v_k) for given per-arm summaries."""
    means, counts, variances = (np.asarray(a, dtype=float) for a in (means, counts, variances))
    w = counts / np.maximum(variances, WEIGHT_VARIANCE_FLOOR)
    return float((w * means).sum() / w.sum())


# ---------------------------------------------------------------------------
# batched loops
# ---------------------------------------------------------------------------


@dataclass
class BatchResult:
    """Snapshots of a block of runs at each checkpoint.

    ``stats`` has shape (checkpoints, runs, arms) and describes the raw
    values that count towards the estimate at that checkpoint.
    """

    checkpoints: np.ndarray
    stats: ArmStatistics
    traces: list[AllocationRun] | None = None
    overshoot: np.ndarray | None = None
    clamped: int = 0
    pairs: int = 0

    @property
    def counts(self) -> np.ndarray:
        return self.stats.count

    @property
    def estimates(self) -> np.ndarray:
        """Unweighted estimate, (checkpoints, runs); 0 where nothing completed."""
        return combine(self.stats).uniform_mean

    def combined(self) -> CombinedEstimate:
        return combine(self.stats)


def _empty_snapshots(n_cp: int, n_runs: int, n_arms: int) -> ArmStatistics:
    shape = (n_cp, n_runs, n_arms)
    return ArmStatistics(np.zeros(shape, dtype=np.int64), np.zeros(shape), np.zeros(shape))


def _draw(buffers: list[DrawBuffer], arms: np.ndarray, per_run: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``per_run`` consecutive values for each entry of ``arms``."""
    vals = np.empty((arms.size, per_run))
    costs = np.empty((arms.size, per_run))
    for k in np.unique(arms):
        rows = np.flatnonzero(arms == k)
        try:
            v, c = buffers[k].take(rows.size * per_run)
        except Exception as exc:
            raise RuntimeError(f"arm {k} ({buffers[k].estimator.name}) failed to produce draws: {exc}") from exc
        vals[rows] = v.reshape(rows.size, per_run)
        costs[rows] = c.reshape(rows.size, per_run)
    return vals, costs


def _check_checkpoints(checkpoints, final) -> np.ndarray:
    cps = np.asarray([final] if checkpoints is None else checkpoints, dtype=float)
    if cps.ndim != 1 or cps.size == 0 or np.any(np.diff(cps) <= 0) or cps[0] <= 0 or cps[-1] > final:
        raise ValueError("checkpoints must be increasing, positive and within the horizon")
    return cps


def uniform_cost_batch(
    buffers: list[DrawBuffer],
    policy: Policy,
    n: int,
    rng: np.random.Generator,
    ranges: RangeSpec | None = None,
    checkpoints=None,
    record: bool = False,
) -> BatchResult:
    """Advance ``policy.n_runs`` runs for ``n`` unit-cost rounds.

    ``ranges`` maps raw values to rewards (default: values already in
    [0, 1], reward 1 - y^2).  ``rng`` drives the policy's own randomness.
    """
    K, B = len(buffers), policy.n_runs
    if policy.n_arms != K:
        raise ValueError("policy and arm list disagree on the number of arms")
    if n < 1:
        raise ValueError("need at least one round")
    ranges = ranges or RangeSpec.unit(K)
    cps = _check_checkpoints(checkpoints, n).astype(np.int64)
    snaps = _empty_snapshots(cps.size, B, K)
    stats = ArmStatistics.zeros((B, K))
    rows = np.arange(B)
    log = {k: np.empty((n, B)) for k in ("arm", "value", "cost", "reward")} if record else None
    ci = 0
    for t in range(1, n + 1):
        arms = policy.select(t, rng)
        v, c = _draw(buffers, arms)
        x = v[:, 0]
        reward = range_scaled_reward(x, arms, ranges)
        policy.update(arms, reward, rng)
        stats.update((rows, arms), x)
        if record:
            log["arm"][t - 1], log["value"][t - 1], log["cost"][t - 1], log["reward"][t - 1] = arms, x, c[:, 0], reward
        if t == cps[ci]:
            snaps.count[ci], snaps.mean[ci], snaps.m2[ci] = stats.count, stats.mean, stats.m2
            ci += 1
            if ci == cps.size:
                break
    traces = None
    if record:
        traces = [
            AllocationRun(log["arm"][:, b], log["value"][:, b], log["cost"][:, b], log["reward"][:, b], np.arange(1, n + 1), K)
            for b in range(B)
        ]
    return BatchResult(cps, snaps, traces)


def cost_aware_batch(
    buffers: list[DrawBuffer],
    policy: Policy,
    budget: float,
    rng: np.random.Generator,
    scale: PairedRewardScale,
    checkpoints=None,
    record: bool = False,
) -> BatchResult:
    """Spend a time budget per run, one paired decision at a time.

    A run keeps starting pairs while its clock J is below ``budget``; a pair
    is never split, so the last one may finish past the budget (recorded in
    ``overshoot``).  At checkpoint time c the snapshot holds exactly the
    draws with J_m <= c.
    """
    K, B = len(buffers), policy.n_runs
    if policy.n_arms != K:
        raise ValueError("policy and arm list disagree on the number of arms")
    if not budget > 0:
        raise ValueError("budget must be positive")
    cps = _check_checkpoints(checkpoints, budget)
    snaps = _empty_snapshots(cps.size, B, K)
    stats = ArmStatistics.zeros((B, K))
    clock = np.zeros(B)
    pending = np.zeros(B, dtype=np.int64)  # next checkpoint index per run
    active = clock < budget
    seen0, clamped0 = scale.seen, scale.clamped
    log = [] if record else None
    decision = 0
    while active.any():
        decision += 1
        arms = policy.select(decision, rng)
        rows = np.flatnonzero(active)
        a = arms[rows]
        v, c = _draw(buffers, a, per_run=2)
        for j in range(2):
            finish = clock[rows] + c[:, j]
            _snapshot(snaps, stats, cps, pending, rows, finish)
            clock[rows] = finish
            stats.update((rows, a), v[:, j])
        raw = paired_cost_reward(v[:, 0], v[:, 1], c[:, 0], c[:, 1])
        reward = np.zeros(B)
        reward[rows] = clamp_paired_to_unit(raw, scale)
        policy.update(arms, reward, rng, active=active)
        if record:
            log.append((decision, rows, a, v, c, reward[rows]))
        active = clock < budget
    # whatever is still pending saw every draw complete by its time
    for b in range(B):
        for i in range(pending[b], cps.size):
            snaps.count[i, b], snaps.mean[i, b], snaps.m2[i, b] = stats.count[b], stats.mean[b], stats.m2[b]
    traces = _cost_traces(log, B, K, budget) if record else None
    return BatchResult(cps, snaps, traces, overshoot=clock - budget, clamped=scale.clamped - clamped0,
                       pairs=scale.seen - seen0)


def _snapshot(snaps, stats, cps, pending, rows, finish) -> None:
    """Record the pre-draw state for every checkpoint the draw finishes after."""
    while True:
        idx = pending[rows]
        hit = idx < cps.size
        hit[hit] = cps[idx[hit]] < finish[hit]
        if not hit.any():
            return
        r, i = rows[hit], idx[hit]
        snaps.count[i, r], snaps.mean[i, r], snaps.m2[i, r] = stats.count[r], stats.mean[r], stats.m2[r]
        pending[r] += 1


def _cost_traces(log, B, K, budget) -> list[AllocationRun]:
    per_run = [[] for _ in range(B)]
    for decision, rows, a, v, c, reward in log:
        for i, b in enumerate(rows):
            for j in range(2):
                per_run[b].append((a[i], v[i, j], c[i, j], reward[i], decision))
    out = []
    for entries in per_run:
        cols = list(zip(*entries)) if entries else [[]] * 5
        out.append(AllocationRun(cols[0], cols[1], cols[2], cols[3], cols[4], K, budget))
    return out


# ---------------------------------------------------------------------------
# single-run conveniences
# ---------------------------------------------------------------------------


def _single_setup(arms, policy, rng):
    if not isinstance(policy, Policy):
        policy = make_policy(policy, len(arms))
    if policy.n_runs != 1:
        raise ValueError("single-run helpers need a policy with n_runs=1")
    policy_rng, *arm_rngs = rng.spawn(len(arms) + 1)
    buffers = [DrawBuffer(est, r) for est, r in zip(arms, arm_rngs)]
    return policy, policy_rng, buffers


def run_uniform_cost(
    arms: list[Estimator], policy, n: int, rng: np.random.Generator, ranges: RangeSpec | None = None
) -> AllocationRun:
    """One run of ``n`` unit-cost rounds; returns its full trace."""
    if n < len(arms):
        raise ValueError("need n >= number of arms so every arm can be initialised")
    policy, prng, buffers = _single_setup(arms, policy, rng)
    return uniform_cost_batch(buffers, policy, n, prng, ranges, record=True).traces[0]


def run_cost_aware(
    arms: list[Estimator],
    policy,
    budget: float,
    rng: np.random.Generator,
    scale: PairedRewardScale,
) -> AllocationRun:
    """One budgeted run; the estimate is ``run.estimate`` (S(t) / (N(t) - 1))."""
    policy, prng, buffers = _single_setup(arms, policy, rng)
    return cost_aware_batch(buffers, policy, budget, prng, scale, record=True).traces[0]


def replay(run: AllocationRun, policy: Policy) -> ArmStatistics:
    """Feed a recorded trace's choices and rewards back through ``policy``.

    The policy must reproduce the recorded choices (a stub that returns
    them, or the same deterministic rule); returns the per-arm statistics
    of the rewards it was fed.
    """
    done = set()
    for i in range(len(run)):
        d = int(run.rounds[i])
        if d in done:
            continue
        done.add(d)
        arm = policy.select(d, np.random.default_rng(0))
        if int(arm[0]) != int(run.choices[i]):
            raise ValueError(f"replayed policy chose arm {int(arm[0])} at round {d}, trace has {int(run.choices[i])}")
        policy.update(arm, np.array([run.rewards[i]]), np.random.default_rng(0))
    return policy.stats


__all__ = [
    "AllocationRun",
    "BatchResult",
    "CombinedEstimate",
    "TRACE_COLUMNS",
    "combine",
    "cost_aware_batch",
    "replay",
    "run_cost_aware",
    "run_uniform_cost",
    "uniform_cost_batch",
    "weighted_mean",
]
