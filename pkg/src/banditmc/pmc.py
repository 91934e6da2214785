"""d-kernel population Monte Carlo over a finite set of twisting drifts.

The proposal is the mixture sum_k alpha_k q_k of the per-drift path laws.
Each generation draws G component labels from alpha, simulates one path per
label and scores it with a per-kernel weight omega: the likelihood ratio w
of the kernel that produced the path.  The coefficients are then refit as

    alpha_k = sum_t omega_t 1{I_t = k} / sum_t omega_t,

floored at ``floor`` and renormalised so no drift is lost for good.  The
price estimate is the running mean of all weighted payoffs.

``weighting="payoff"`` uses w * p instead (the ratio of the zero-variance
density to the kernel).  Per-kernel weights have expectation proportional
to alpha_k under either choice, so the refit carries no systematic drift
towards low-variance drifts; mixture (Rao-Blackwellised) weights would,
but they are a different update.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .estimators.cir import CIRCaplet, mixture_payoffs

log = logging.getLogger(__name__)

ALPHA_FLOOR = 1e-6
WEIGHTINGS = ("ratio", "payoff")


@dataclass
class MixtureState:
    alphas: np.ndarray
    generation: int = 0
    population: int = 100
    flagged: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float)
        if self.population < 1:
            raise ValueError("population size must be positive")
        if np.any(self.alphas < 0) or abs(self.alphas.sum() - 1.0) > 1e-12:
            raise ValueError("alphas must be a probability vector")

    @classmethod
    def uniform(cls, n_components: int, population: int = 100) -> "MixtureState":
        return cls(np.full(n_components, 1.0 / n_components), population=population)


@dataclass
class Generation:
    components: np.ndarray
    weights: np.ndarray
    payoffs: np.ndarray

    @property
    def values(self) -> np.ndarray:
        """Per-draw unbiased price estimates w * p."""
        return self.weights * self.payoffs


def refit_alphas(alphas, components, omega, floor: float = ALPHA_FLOOR) -> tuple[np.ndarray, bool]:
    """The weighted-frequency update.  Returns (new alphas, degenerate?).

    A zero total weight leaves ``alphas`` unchanged and reports it.
    """
    alphas = np.asarray(alphas, dtype=float)
    omega = np.asarray(omega, dtype=float)
    total = omega.sum()
    if not total > 0:
        return alphas.copy(), True
    new = np.bincount(np.asarray(components), weights=omega, minlength=alphas.size) / total
    new = np.maximum(new, floor)
    return new / new.sum(), False


def _simulate(arms, components, rng) -> tuple[np.ndarray, np.ndarray]:
    base = arms[0].spec
    if all(isinstance(a, CIRCaplet) and replace(a.spec, theta=0.0) == replace(base, theta=0.0) for a in arms):
        thetas = np.array([a.spec.theta for a in arms])[components]
        return mixture_payoffs(base, thetas, rng)
    w = np.empty(components.size)
    p = np.empty(components.size)
    for k in np.unique(components):
        idx = np.flatnonzero(components == k)
        w[idx], p[idx] = arms[k].parts(rng, idx.size)
    return w, p


def pmc_generation(
    state: MixtureState, arms, rng: np.random.Generator, floor: float = ALPHA_FLOOR, weighting: str = "ratio"
) -> tuple[Generation, MixtureState]:
    """Draw one population from the current mixture and refit it."""
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    if len(arms) != state.alphas.size:
        raise ValueError("one mixture component per arm is required")
    comps = rng.choice(state.alphas.size, size=state.population, p=state.alphas)
    w, p = _simulate(arms, comps, rng)
    gen = Generation(comps, w, p)
    omega = gen.values if weighting == "payoff" else w
    alphas, degenerate = refit_alphas(state.alphas, comps, omega, floor)
    flagged = list(state.flagged)
    if degenerate:
        flagged.append(state.generation)
        log.warning("PMC generation %d had zero total weight; mixture kept", state.generation)
    return gen, MixtureState(alphas, state.generation + 1, state.population, flagged)


@dataclass
class PMCResult:
    checkpoints: np.ndarray
    estimates: np.ndarray  # (checkpoints, runs)
    counts: np.ndarray  # (checkpoints, runs, components)
    alphas: np.ndarray  # (generations, runs, components)
    flagged: int


def pmc_batch(
    arms, n: int, rng: np.random.Generator, n_runs: int = 1, population: int = 100, checkpoints=None,
    floor: float = ALPHA_FLOOR, weighting: str = "ratio",
) -> PMCResult:
    """Independent PMC runs in lockstep, ``n`` samples each.

    Runs share nothing but the generator; the last generation is truncated
    so every run uses exactly ``n`` samples.
    """
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    K = len(arms)
    cps = np.asarray([n] if checkpoints is None else checkpoints, dtype=np.int64)
    if np.any(np.diff(cps) <= 0) or cps[0] < 1 or cps[-1] > n:
        raise ValueError("checkpoints must be increasing and within 1..n")
    alphas = np.full((n_runs, K), 1.0 / K)
    total = np.zeros(n_runs)
    done = 0
    est = np.zeros((cps.size, n_runs))
    counts = np.zeros((cps.size, n_runs, K), dtype=np.int64)
    seen = np.zeros((n_runs, K), dtype=np.int64)
    run_idx = np.arange(n_runs)
    history = []
    flagged = 0
    ci = 0
    while done < n:
        g = min(population, n - done)
        u = rng.random((n_runs, g))
        comps = np.minimum((u[:, :, None] > np.cumsum(alphas, axis=1)[:, None, :]).sum(axis=2), K - 1)
        w, p = _simulate(arms, comps.ravel(), rng)
        vals = (w * p).reshape(n_runs, g)
        omega = vals if weighting == "payoff" else w.reshape(n_runs, g)
        # running sums checked against checkpoints that fall inside this generation
        csum = total[:, None] + np.cumsum(vals, axis=1)
        while ci < cps.size and cps[ci] <= done + g:
            m = cps[ci] - done
            est[ci] = csum[:, m - 1] / cps[ci]
            part = np.zeros((n_runs, K), dtype=np.int64)
            np.add.at(part, (np.repeat(run_idx, m), comps[:, :m].ravel()), 1)
            counts[ci] = seen + part
            ci += 1
        total = csum[:, -1]
        np.add.at(seen, (np.repeat(run_idx, g), comps.ravel()), 1)
        done += g
        for b in range(n_runs):
            alphas[b], bad = refit_alphas(alphas[b], comps[b], omega[b], floor)
            flagged += bad
        history.append(alphas.copy())
    return PMCResult(cps, est, counts, np.array(history), flagged)
