"""Replicated evaluation of allocation policies.

Replicates are split into fixed-size blocks.  Block b of method m draws
from streams keyed ``(b, role, m, arm)`` under the master seed, so a report
depends only on (seed, experiment, block size) and never on how many worker
processes shared the blocks.

Losses are replicate averages of squared error against the true mean (or a
recorded high-precision reference).  Regret is the excess loss over the
best single arm, scaled by n^2 for a fixed number of rounds and by t^2 on
the time axis.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .allocator import BatchResult, cost_aware_batch, uniform_cost_batch
from .bandits import make_policy, normalize_kind
from .estimators.base import DrawBuffer, Estimator
from .estimators.synthetic import ScaledBernoulli, ScaledBernoulliSpec
from .rewards import PairedRewardScale, RangeSpec
from .pmc import pmc_batch
from .rng import AUX, POLICY, block_streams, make_rng, stream_id

log = logging.getLogger(__name__)

DEFAULT_BLOCK = 250
REPORT_COLUMNS = ("experiment", "policy", "checkpoint", "mse", "regret", "se")


@dataclass
class Experiment:
    """Everything needed to replicate runs of one allocation problem.

    ``mode`` is ``"rounds"`` (unit costs, horizon = n) or ``"budget"``
    (random costs, horizon = time budget).  ``variances`` are the per-arm
    V_k when known; they give analytic single-arm losses V_k / n.
    """

    name: str
    arms: list[Estimator]
    horizon: float
    mode: str = "rounds"
    checkpoints: np.ndarray | None = None
    mean: float | None = None
    variances: np.ndarray | None = None
    ranges: RangeSpec | None = None
    scale: PairedRewardScale | None = None
    block_size: int = DEFAULT_BLOCK
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("rounds", "budget"):
            raise ValueError("mode must be 'rounds' or 'budget'")
        if self.mode == "budget" and self.scale is None:
            raise ValueError("budgeted experiments need a PairedRewardScale")
        if self.mode == "rounds":
            self.horizon = int(self.horizon)
        cps = [self.horizon] if self.checkpoints is None else self.checkpoints
        self.checkpoints = np.asarray(cps, dtype=np.int64 if self.mode == "rounds" else float)
        if self.variances is not None:
            self.variances = np.asarray(self.variances, dtype=float)
        if self.block_size < 1:
            raise ValueError("block size must be positive")

    @property
    def n_arms(self) -> int:
        return len(self.arms)


# ---------------------------------------------------------------------------
# running blocks
# ---------------------------------------------------------------------------


def block_sizes(replicates: int, block_size: int) -> list[int]:
    full, rest = divmod(replicates, block_size)
    return [block_size] * full + ([rest] if rest else [])


def method_key(name: str) -> str:
    """Canonical method name; spelling variants share random streams."""
    low = name.lower()
    if low in ("uniform", "roundrobin", "round-robin"):
        return "uniform"
    return normalize_kind(name) or low


def run_block(exp: Experiment, policy: str, block: int, n_runs: int, seed: int, record: bool = False) -> BatchResult:
    """One block of ``n_runs`` lockstep replicates of ``policy``."""
    prng, arm_rngs = block_streams(seed, block, exp.n_arms, stream_id(method_key(policy)))
    buffers = [DrawBuffer(est, r) for est, r in zip(exp.arms, arm_rngs)]
    range_sq = exp.ranges.width_sq if exp.ranges is not None else None
    pol = make_policy(policy, exp.n_arms, n_runs, range_sq)
    if exp.mode == "rounds":
        return uniform_cost_batch(buffers, pol, exp.horizon, prng, exp.ranges, exp.checkpoints, record)
    scale = PairedRewardScale(exp.scale.d_max, exp.scale.x_range)
    return cost_aware_batch(buffers, pol, exp.horizon, prng, scale, exp.checkpoints, record)


def _run_block_task(args) -> BatchResult:
    return run_block(*args)


def run_policy(exp: Experiment, policy: str, replicates: int, seed: int, workers: int = 1) -> list[BatchResult]:
    """All blocks of one policy, in block order."""
    tasks = [(exp, policy, b, n, seed) for b, n in enumerate(block_sizes(replicates, exp.block_size))]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            return list(pool.map(_run_block_task, tasks))
    return [run_block(*t) for t in tasks]


def _stack(results: list[BatchResult]):
    est = np.concatenate([r.estimates for r in results], axis=1)
    comb = [r.combined() for r in results]
    weighted = np.concatenate([c.weighted_mean for c in comb], axis=1)
    counts = np.concatenate([r.counts for r in results], axis=1)
    clamped = sum(r.clamped for r in results)
    pairs = sum(r.pairs for r in results)
    return est, weighted, counts, clamped, pairs


# ---------------------------------------------------------------------------
# reference values
# ---------------------------------------------------------------------------


@dataclass
class Reference:
    mean: float
    se: float
    pilot_means: np.ndarray
    pilot_variances: np.ndarray
    arm: int
    samples: int


def reference_run(arms: list[Estimator], seed: int, pilot: int = 10_000, samples: int = 1_000_000) -> Reference:
    """High-precision reference for an unknown common mean.

    A pilot of ``pilot`` draws per arm picks the lowest-variance arm, which
    then supplies ``samples`` fresh draws.  All draws use the AUX streams.
    """
    means, variances = [], []
    for k, est in enumerate(arms):
        v = DrawBuffer(est, make_rng(seed, 0, AUX, 0, k), chunk=pilot).take(pilot)[0]
        means.append(v.mean())
        variances.append(v.var(ddof=1))
    best = int(np.argmin(variances))
    buf = DrawBuffer(arms[best], make_rng(seed, 0, AUX, 1, best), chunk=min(samples, 1 << 16))
    total, total_sq, done = 0.0, 0.0, 0
    while done < samples:
        k = min(1 << 16, samples - done)
        v = buf.take(k)[0]
        total += v.sum()
        total_sq += (v * v).sum()
        done += k
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0) * samples / max(samples - 1, 1)
    return Reference(mean, math.sqrt(var / samples), np.array(means), np.array(variances), best, samples)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class RegretReport:
    """Replicate summary of one method on one experiment, per checkpoint."""

    experiment: str
    policy: str
    checkpoints: np.ndarray
    sq_errors: np.ndarray  # (checkpoints, replicates)
    counts: np.ndarray  # (checkpoints, replicates, arms)
    best_loss: np.ndarray
    best_loss_se: np.ndarray
    variances: np.ndarray | None = None
    clamped: int = 0
    pairs: int = 0

    @property
    def replicates(self) -> int:
        return self.sq_errors.shape[1]

    @property
    def mse(self) -> np.ndarray:
        return self.sq_errors.mean(axis=1)

    @property
    def mse_se(self) -> np.ndarray:
        return self.sq_errors.std(axis=1, ddof=1) / math.sqrt(self.replicates)

    @property
    def scale(self) -> np.ndarray:
        return self.checkpoints.astype(float) ** 2

    @property
    def regret(self) -> np.ndarray:
        """n^2 (L_n - min_k L_k,n), or t^2 (...) on the time axis."""
        return self.scale * (self.mse - self.best_loss)

    @property
    def regret_se(self) -> np.ndarray:
        return self.scale * np.sqrt(self.mse_se**2 + self.best_loss_se**2)

    @property
    def mean_counts(self) -> np.ndarray:
        return self.counts.mean(axis=1)

    @property
    def counts_se(self) -> np.ndarray:
        return self.counts.std(axis=1, ddof=1) / math.sqrt(self.replicates)

    def _identity_terms(self) -> np.ndarray:
        v = self.variances
        return (self.counts * (v - v.min())).sum(axis=2)

    @property
    def identity_rhs(self) -> np.ndarray | None:
        """sum_k Tbar_k (V_k - V*); needs known variances."""
        return None if self.variances is None else self._identity_terms().mean(axis=1)

    @property
    def identity_rhs_se(self) -> np.ndarray | None:
        if self.variances is None:
            return None
        return self._identity_terms().std(axis=1, ddof=1) / math.sqrt(self.replicates)


@dataclass
class IdentityCheck:
    passed: bool
    lhs: float
    rhs: float
    discrepancy: float
    combined_se: float

    def __str__(self) -> str:
        return (f"n^2 excess MSE = {self.lhs:.4g}, sum Tbar_k (V_k - V*) = {self.rhs:.4g}, "
                f"|diff| = {self.discrepancy:.3g} vs 3 SE = {3 * self.combined_se:.3g}")


def theorem1_check(report: RegretReport, checkpoint: int = -1, n_se: float = 3.0) -> IdentityCheck:
    """Compare n^2 (MSE - V*/n) with sum_k Tbar_k (V_k - V*).

    The best-arm loss must be analytic (zero SE); the combined SE adds the
    two sides' replicate standard errors in quadrature.
    """
    if report.variances is None:
        raise ValueError("the identity needs analytically known arm variances")
    lhs = float(report.regret[checkpoint])
    rhs = float(report.identity_rhs[checkpoint])
    se = math.hypot(float(report.regret_se[checkpoint]), float(report.identity_rhs_se[checkpoint]))
    diff = abs(lhs - rhs)
    return IdentityCheck(diff <= n_se * se, lhs, rhs, diff, se)


def _best_loss_from_variances(exp: Experiment) -> tuple[np.ndarray, np.ndarray]:
    n = exp.checkpoints.astype(float)
    best = exp.variances.min() / n
    return best, np.zeros_like(best)


def evaluate(
    exp: Experiment,
    policies: list[str],
    replicates: int,
    seed: int,
    workers: int = 1,
    combiner: str = "uniform",
    baselines: str = "auto",
) -> list[RegretReport]:
    """Reports for each policy (and fixed-arm baselines when simulated).

    ``baselines="auto"`` uses V_k / n when variances are known and the loop
    has unit costs; otherwise every fixed-arm method ``arm<k>`` is simulated
    with the same budget and its report is included.  ``combiner`` selects
    the unweighted estimate, the inverse-variance weighted one
    (reported as ``<policy>+weighted``), or both.
    """
    if replicates < 2:
        raise ValueError("need at least two replicates for standard errors")
    if combiner not in ("uniform", "weighted", "both"):
        raise ValueError("combiner must be uniform, weighted or both")
    mu = exp.mean
    if mu is None:
        raise ValueError(f"experiment {exp.name!r} has no true or reference mean")
    analytic = baselines == "analytic" or (baselines == "auto" and exp.variances is not None and exp.mode == "rounds")
    if baselines == "analytic" and exp.variances is None:
        raise ValueError("analytic baselines need known variances")

    raw: dict[str, tuple] = {}
    methods = list(policies)
    if not analytic:
        methods += [f"arm{k}" for k in range(exp.n_arms) if f"arm{k}" not in methods]
    for m in methods:
        raw[m] = _stack(run_policy(exp, m, replicates, seed, workers))

    if analytic:
        best, best_se = _best_loss_from_variances(exp)
    else:
        losses = np.array([((raw[f"arm{k}"][0] - mu) ** 2).mean(axis=1) for k in range(exp.n_arms)])
        ses = np.array([((raw[f"arm{k}"][0] - mu) ** 2).std(axis=1, ddof=1) / math.sqrt(replicates)
                        for k in range(exp.n_arms)])
        idx = np.argmin(losses, axis=0)
        cols = np.arange(losses.shape[1])
        best, best_se = losses[idx, cols], ses[idx, cols]

    variances = exp.variances if exp.mode == "rounds" else None
    reports = []
    for m in methods:
        est, weighted, counts, clamped, pairs = raw[m]
        if combiner in ("uniform", "both") or m.startswith("arm"):
            reports.append(RegretReport(exp.name, m, exp.checkpoints, (est - mu) ** 2, counts, best, best_se,
                                        variances, clamped, pairs))
        if combiner in ("weighted", "both") and not m.startswith("arm"):
            reports.append(RegretReport(exp.name, f"{m}+weighted", exp.checkpoints, (weighted - mu) ** 2, counts,
                                        best, best_se, variances, clamped, pairs))
    return reports


def _pmc_block(args):
    exp, block, n_runs, seed, population, weighting = args
    rng = make_rng(seed, block, POLICY, stream_id("PMC"))
    return pmc_batch(exp.arms, exp.horizon, rng, n_runs, population, exp.checkpoints, weighting=weighting)


def evaluate_pmc(exp: Experiment, replicates: int, seed: int, workers: int = 1, population: int = 100,
                 weighting: str = "ratio") -> RegretReport:
    """The population Monte Carlo baseline on a fixed-sample experiment."""
    if exp.mode != "rounds" or exp.variances is None:
        raise ValueError("PMC is evaluated on fixed-sample experiments with known arm variances")
    tasks = [(exp, b, n, seed, population, weighting) for b, n in enumerate(block_sizes(replicates, exp.block_size))]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            results = list(pool.map(_pmc_block, tasks))
    else:
        results = [_pmc_block(t) for t in tasks]
    est = np.concatenate([r.estimates for r in results], axis=1)
    counts = np.concatenate([r.counts for r in results], axis=1)
    best, best_se = _best_loss_from_variances(exp)
    return RegretReport(exp.name, "PMC", exp.checkpoints, (est - exp.mean) ** 2, counts, best, best_se, exp.variances)


# ---------------------------------------------------------------------------
# the two-arm scaled-Bernoulli grid
# ---------------------------------------------------------------------------


def bernoulli_pair(s1: float, s2: float, n: int, checkpoints=None, block_size: int = DEFAULT_BLOCK) -> Experiment:
    """Two symmetric scaled-Bernoulli arms around 1/2 with scales s1, s2."""
    specs = [ScaledBernoulliSpec(0.5, s1, 0.5), ScaledBernoulliSpec(0.5, s2, 0.5)]
    return Experiment(
        f"bernoulli({s1:g},{s2:g})", [ScaledBernoulli(s) for s in specs], n, "rounds", checkpoints, 0.5,
        np.array([s.variance for s in specs]), RangeSpec.unit(2), block_size=block_size,
    )


@dataclass
class GridCell:
    s1: float
    s2: float
    regret: dict[str, float]
    regret_se: dict[str, float]
    winner: str
    margin_se: float


def fig1_grid(scales, policies: list[str], n: int, replicates: int, seed: int, workers: int = 1,
              block_size: int = DEFAULT_BLOCK) -> list[GridCell]:
    """Winner per (s1, s2) cell by regret sum_k Tbar_k (V_k - V*).

    That expression equals n^2 (L_n - V*/n) in expectation and is far less
    noisy than the squared-error form at large n.  Cells where no policy
    wins by more than 2 SE over the runner-up are reported as ``tie``
    (including the equal-variance diagonal, where every regret is 0).
    """
    cells = []
    for i, s1 in enumerate(scales):
        for s2 in scales[i:]:
            exp = bernoulli_pair(s1, s2, n, block_size=block_size)
            reps = evaluate(exp, policies, replicates, seed, workers)
            reg = {r.policy: float(r.identity_rhs[-1]) for r in reps}
            se = {r.policy: float(r.identity_rhs_se[-1]) for r in reps}
            order = sorted(reg, key=reg.get)
            if len(order) == 1:
                cells.append(GridCell(s1, s2, reg, se, order[0], math.inf))
                continue
            a, b = order[0], order[1]
            spread = math.hypot(se[a], se[b])
            margin = (reg[b] - reg[a]) / spread if spread > 0 else 0.0
            cells.append(GridCell(s1, s2, reg, se, a if margin >= 2 else "tie", margin))
    return cells


def grid_csv(cells: list[GridCell], policies: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s1", "s2", *[f"regret_{p}" for p in policies], *[f"se_{p}" for p in policies], "winner", "margin_se"])
    for c in cells:
        w.writerow([repr(c.s1), repr(c.s2), *[repr(c.regret[p]) for p in policies],
                    *[repr(c.regret_se[p]) for p in policies], c.winner, repr(round(c.margin_se, 6))])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def provenance_line(chash: str, seed: int) -> str:
    return f"# banditmc {__version__} config={chash} seed={seed}\n"


def report_csv(reports: list[RegretReport], n_arms: int) -> str:
    """Rows (experiment, policy, checkpoint, mse, regret, se, T_1..T_K, identity_rhs)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*REPORT_COLUMNS, *[f"T_{k + 1}" for k in range(n_arms)], "identity_rhs"])
    for r in reports:
        mse, reg, se, counts = r.mse, r.regret, r.regret_se, r.mean_counts
        rhs = r.identity_rhs
        for i, cp in enumerate(r.checkpoints):
            cp_s = str(int(cp)) if float(cp).is_integer() else repr(float(cp))
            w.writerow([r.experiment, r.policy, cp_s, repr(float(mse[i])), repr(float(reg[i])), repr(float(se[i])),
                        *[repr(float(c)) for c in counts[i]], "" if rhs is None else repr(float(rhs[i]))])
    return buf.getvalue()


def write_outputs(out_dir, name: str, body: str, metadata: dict) -> tuple[str, str]:
    """Write ``<name>.csv`` (with a provenance comment line) and ``<name>.meta.json``."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{name}.csv")
    meta_path = os.path.join(out_dir, f"{name}.meta.json")
    with open(csv_path, "w", newline="") as fh:
        fh.write(provenance_line(metadata["config_hash"], metadata["seed"]))
        fh.write(body)
    with open(meta_path, "w") as fh:
        json.dump({**metadata, "version": __version__}, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return csv_path, meta_path
