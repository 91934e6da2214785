"""Builders for the experiment families: CIR caplets, AIS and custom arms."""

from __future__ import annotations

import logging
import math

import numpy as np

from .config import ArmSpec, ExperimentConfig, TargetSpec
from .estimators import (
    AISEstimator,
    AISSpec,
    CIRSpec,
    Constant,
    CostModel,
    Gaussian,
    GaussianToy,
    LogisticRegressionTarget,
    ScaledBernoulli,
    ScaledBernoulliSpec,
    ais_log_weights,
    cir_arms,
    deterministic_price,
    load_dataset_csv,
    synthetic_logistic_dataset,
)
from .estimators.base import DrawBuffer, Estimator
from .harness import Experiment, reference_run
from .rewards import PairedRewardScale, RangeSpec
from .rng import AUX, make_rng

log = logging.getLogger(__name__)

# multiples of the smallest pilot standard deviation used as the CIR reward half-width
CIR_HALFWIDTH_SDS = 10.0


def log_grid(horizon: float, count: int = 8, start: float | None = None, integer: bool = True) -> np.ndarray:
    """Roughly log-spaced checkpoints ending exactly at ``horizon``."""
    start = start or horizon / 10 ** (count / 4)
    pts = np.geomspace(start, horizon, count)
    if integer:
        pts = np.unique(np.maximum(np.round(pts).astype(np.int64), 1))
        pts[-1] = int(horizon)
        return pts
    pts[-1] = horizon
    return pts


# ---------------------------------------------------------------------------
# CIR
# ---------------------------------------------------------------------------


def cir_experiment(
    n: int = 100_000,
    strike: float = 0.06,
    seed: int = 0,
    thetas=None,
    sigma: float = 0.02,
    n_steps: int = 100,
    twist: str = "brownian",
    pilot_samples: int = 100_000,
    reference_samples: int = 1_000_000,
    reward_halfwidth: float | None = None,
    checkpoints=None,
    block_size: int = 250,
) -> Experiment:
    """Caplet pricing with one arm per twist value.

    A pilot run estimates every arm's variance (used for the single-arm
    losses V_k / n) and a reference run fixes the price.  Rewards measure
    squared deviations from the deterministic-rate price, within a
    half-width of ``CIR_HALFWIDTH_SDS`` pilot standard deviations of the
    best arm; draws outside that window are clipped and counted.
    """
    spec = CIRSpec(sigma=sigma, n_steps=n_steps, K=strike, twist=twist)
    arms = cir_arms(spec, thetas)
    ref = reference_run(arms, seed, pilot_samples, reference_samples)
    center = deterministic_price(spec)
    half = reward_halfwidth or CIR_HALFWIDTH_SDS * math.sqrt(ref.pilot_variances.min())
    K = len(arms)
    ranges = RangeSpec(np.full(K, center - half), np.full(K, center + half), center=center, clip=True)
    cps = log_grid(n) if checkpoints is None else checkpoints
    meta = {
        "reference_mean": ref.mean,
        "reference_se": ref.se,
        "reference_arm": ref.arm,
        "reference_samples": ref.samples,
        "pilot_variances": ref.pilot_variances.tolist(),
        "reward_center": center,
        "reward_halfwidth": half,
        "thetas": [a.spec.theta for a in arms],
    }
    return Experiment(f"cir(K={strike:g})", arms, n, "rounds", cps, ref.mean, ref.pilot_variances, ranges,
                      block_size=block_size, metadata=meta)


# ---------------------------------------------------------------------------
# AIS
# ---------------------------------------------------------------------------


def build_target(spec: TargetSpec, seed: int):
    if spec.kind == "gaussian-toy":
        centers = None if spec.centers is None else np.asarray(spec.centers, dtype=float).reshape(-1, 1)
        return GaussianToy(spec.dim, spec.prior_var, spec.precision, centers, spec.weights)
    if spec.dataset:
        data = load_dataset_csv(spec.dataset)
    else:
        data = synthetic_logistic_dataset(spec.synthetic_n, spec.synthetic_dim, make_rng(seed, 0, AUX, 2))
    return LogisticRegressionTarget(data)


def calibrate_paired_scale(
    arms: list[Estimator], seed: int, pairs: int = 500, clamp_rate: float = 1e-3, margin: float = 1.25
) -> PairedRewardScale:
    """Cap for the paired reward from a pilot of ``pairs`` pairs per arm.

    The floor 0.5 d_max x_range^2 is set to ``margin`` times the largest
    per-arm (1 - clamp_rate) quantile of |(d1 + d2)(x1 - x2)^2 / 4|, so at
    most about ``clamp_rate`` of pairs get clamped.  ``d_max`` is the
    largest pilot cost; ``x_range`` follows from the floor.
    """
    floor, d_max = 0.0, 0.0
    for k, est in enumerate(arms):
        v, c = DrawBuffer(est, make_rng(seed, 0, AUX, 3, k), chunk=2 * pairs).take(2 * pairs)
        raw = 0.25 * (c[0::2] + c[1::2]) * (v[0::2] - v[1::2]) ** 2
        floor = max(floor, float(np.quantile(raw, 1.0 - clamp_rate)))
        d_max = max(d_max, float(c.max()))
    floor = margin * max(floor, 1e-300)
    return PairedRewardScale(d_max, math.sqrt(2.0 * floor / d_max))


def ais_arms(n_anneal, target, slice_width: float = 1.0, unit_cost: float = 1.0, overhead: float = 0.0,
             cost_sigma: float = 0.1, wall_clock: bool = False, log_offset: float = 0.0) -> list[AISEstimator]:
    arms = []
    for n in n_anneal:
        spec = AISSpec(int(n), target, slice_width=slice_width, log_offset=log_offset)
        mean_cost = overhead + int(n) * unit_cost
        cost = CostModel("wall-clock" if wall_clock else "lognormal", mean=mean_cost, sigma=cost_sigma)
        arms.append(AISEstimator(spec, cost))
    return arms


def ais_experiment(
    budget: float,
    target=None,
    n_anneal=(400, 2000, 8000),
    seed: int = 0,
    slice_width: float = 1.0,
    unit_cost: float = 1.0,
    overhead: float = 0.0,
    cost_sigma: float = 0.1,
    wall_clock: bool = False,
    d_max: float | None = None,
    x_range: float | None = None,
    pilot_pairs: int = 500,
    reference_samples: int = 10_000,
    checkpoints=None,
    block_size: int = 250,
    name: str | None = None,
) -> Experiment:
    """Cost-aware allocation among AIS samplers of different lengths.

    With a target of known normaliser the true mean is exact; otherwise
    weights are rescaled by a pilot estimate of log Z (kept in the metadata)
    and the reference mean comes from a separate reference run.
    """
    target = target if target is not None else GaussianToy()
    log_offset = 0.0
    if target.log_z is None:
        pilot = ais_log_weights(AISSpec(int(min(n_anneal)), target, slice_width=slice_width),
                                make_rng(seed, 0, AUX, 4), 64)
        log_offset = float(np.max(pilot))
    arms = ais_arms(n_anneal, target, slice_width, unit_cost, overhead, cost_sigma, wall_clock, log_offset)
    meta = {"log_offset": log_offset, "n_anneal": [int(n) for n in n_anneal], "overhead": overhead}
    if target.log_z is not None:
        mean = math.exp(target.log_z - log_offset)
        meta["true_mean"] = mean
    else:
        ref = reference_run(arms, seed, pilot=min(reference_samples, 256), samples=reference_samples)
        mean = ref.mean
        meta.update(reference_mean=ref.mean, reference_se=ref.se, reference_arm=ref.arm)
    if d_max is not None and x_range is not None:
        scale = PairedRewardScale(d_max, x_range)
    else:
        scale = calibrate_paired_scale(arms, seed, pilot_pairs)
    meta.update(d_max=scale.d_max, x_range=scale.x_range)
    cps = log_grid(budget, integer=False) if checkpoints is None else checkpoints
    label = name or f"ais({','.join(str(int(n)) for n in n_anneal)})"
    return Experiment(label, arms, budget, "budget", cps, mean, None, None, scale, block_size, meta)


# ---------------------------------------------------------------------------
# custom arms
# ---------------------------------------------------------------------------


def build_arm(spec: ArmSpec) -> Estimator:
    cost = CostModel(spec.cost.kind, spec.cost.mean, spec.cost.p, spec.cost.sigma)
    if spec.kind == "scaled-bernoulli":
        return ScaledBernoulli(ScaledBernoulliSpec(spec.midpoint, spec.scale, spec.p), cost)
    if spec.kind == "gaussian":
        return Gaussian(spec.mean, spec.variance, cost)
    if spec.kind == "constant":
        return Constant(spec.mean, cost)
    raise ValueError(f"unknown arm kind {spec.kind!r}")


def custom_experiment(
    arm_specs: list[ArmSpec], n: int | None = None, budget: float | None = None, mean: float | None = None,
    d_max: float | None = None, x_range: float | None = None, seed: int = 0, checkpoints=None,
    block_size: int = 250,
) -> Experiment:
    """Ad-hoc arms.  All arms must estimate the same mean."""
    arms = [build_arm(s) for s in arm_specs]
    means = [a.true_mean for a in arms]
    if mean is None:
        if any(m is None for m in means) or not np.allclose(means, means[0]):
            raise ValueError("arms disagree on the mean; set custom.mean explicitly")
        mean = float(means[0])
    known = all(a.true_variance is not None for a in arms)
    variances = np.array([a.true_variance for a in arms]) if known else None
    if (n is None) == (budget is None):
        raise ValueError("give exactly one of n (unit-cost rounds) or budget (time budget)")
    if n is not None:
        lowers, uppers = [], []
        for s, a in zip(arm_specs, arms):
            lo, hi = (s.lower, s.upper) if s.lower is not None else (a.value_range or (None, None))
            if lo is None or hi is None:
                raise ValueError(f"arm {a.name}: give lower/upper bounds for the reward map")
            lowers.append(lo)
            uppers.append(hi)
        ranges = RangeSpec(np.array(lowers), np.array(uppers))
        cps = log_grid(n) if checkpoints is None else checkpoints
        return Experiment("custom", arms, n, "rounds", cps, mean, variances, ranges, block_size=block_size)
    scale = PairedRewardScale(d_max, x_range) if d_max and x_range else calibrate_paired_scale(arms, seed)
    cps = log_grid(budget, integer=False) if checkpoints is None else checkpoints
    return Experiment("custom", arms, budget, "budget", cps, mean, None, None, scale, block_size,
                      {"d_max": scale.d_max, "x_range": scale.x_range})


# ---------------------------------------------------------------------------
# from a config
# ---------------------------------------------------------------------------


def from_config(cfg: ExperimentConfig) -> Experiment:
    """Build the experiment described by ``cfg`` (not the grid family)."""
    cps = cfg.checkpoints
    if cfg.experiment == "cir":
        c = cfg.cir
        exp = cir_experiment(cfg.n or 100_000, c.strike, cfg.seed, c.thetas, c.sigma, c.n_steps, c.twist,
                             c.pilot_samples, c.reference_samples, c.reward_halfwidth, cps, cfg.block_size)
        return exp
    if cfg.experiment == "ais":
        a = cfg.ais
        target = build_target(a.target, cfg.seed)
        budget = cfg.budget or 100.0 * (a.overhead + max(a.n_anneal) * a.unit_cost)
        return ais_experiment(budget, target, a.n_anneal, cfg.seed, a.slice_width, a.unit_cost, a.overhead,
                              a.cost_sigma, a.wall_clock, a.d_max, a.x_range, a.pilot_pairs, a.reference_samples,
                              cps, cfg.block_size)
    if cfg.experiment == "custom":
        c = cfg.custom
        n = cfg.n if cfg.budget is None else None
        if n is None and cfg.budget is None:
            n = 10_000
        return custom_experiment(c.arms, n, cfg.budget, c.mean, c.d_max, c.x_range, cfg.seed, cps, cfg.block_size)
    raise ValueError(f"{cfg.experiment!r} is not built by from_config")


__all__ = [
    "ais_arms",
    "ais_experiment",
    "build_arm",
    "build_target",
    "calibrate_paired_scale",
    "cir_experiment",
    "custom_experiment",
    "from_config",
    "log_grid",
]
