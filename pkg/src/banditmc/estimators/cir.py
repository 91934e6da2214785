"""Caplet pricing under the Cox-Ingersoll-Ross short-rate model.

Rates follow the Euler scheme

    r_t = r_{t-1} + (eta - kappa r_{t-1}) h + sigma sqrt(r_{t-1} h) eps_t,   h = T / n,

with full truncation (negative rates are replaced by 0 inside the drift and
the square root).  Exponential twisting draws eps_t ~ N(s, 1) instead of
N(0, 1) and reweights by the density ratio exp(-s sum(eps) + n s^2 / 2).

The twist parameter ``theta`` is a drift on the driving Brownian motion by
default, so the per-step shift is s = theta sqrt(h).  ``twist="per_step"``
uses s = theta directly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .base import CostModel, Estimator

log = logging.getLogger(__name__)

TWIST_MODES = ("brownian", "per_step")


@dataclass(frozen=True)
class CIRSpec:
    eta: float = 0.016
    kappa: float = 0.2
    sigma: float = 0.02
    r0: float = 0.08
    T: float = 1.0
    n_steps: int = 100
    M: float = 1000.0
    K: float = 0.06
    theta: float = 0.0
    twist: str = "brownian"

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be positive")
        if self.sigma < 0 or self.r0 <= 0 or self.T <= 0:
            raise ValueError("need sigma >= 0, r0 > 0, T > 0")
        if self.twist not in TWIST_MODES:
            raise ValueError(f"twist must be one of {TWIST_MODES}")
        if not math.isfinite(self.theta):
            raise ValueError("theta must be finite")

    @property
    def h(self) -> float:
        return self.T / self.n_steps

    @property
    def shift(self) -> float:
        """Mean of the twisted per-step innovations."""
        return self.theta * math.sqrt(self.h) if self.twist == "brownian" else self.theta


def theta_grid(count: int = 16, step: float = 0.1) -> list[float]:
    return [round(k * step, 10) for k in range(count)]


def _euler(spec: CIRSpec, rng: np.random.Generator, size: int, keep_path: bool, shift=None):
    """Vectorised Euler paths.  ``shift`` overrides ``spec.shift`` and may be
    one value per path."""
    h = spec.h
    shift = spec.shift if shift is None else np.asarray(shift, dtype=float)
    r = np.full(size, float(spec.r0))
    esum = np.zeros(size)
    rsum = np.zeros(size)
    truncated = 0
    path = np.empty((size, spec.n_steps)) if keep_path else None
    r1 = None
    for t in range(spec.n_steps):
        eps = rng.standard_normal(size)
        if np.any(shift):
            eps += shift
        esum += eps
        neg = r < 0
        if neg.any():
            truncated += int(neg.sum())
            rp = np.maximum(r, 0.0)
        else:
            rp = r
        r = r + (spec.eta - spec.kappa * rp) * h + spec.sigma * np.sqrt(rp * h) * eps
        rsum += r
        if t == 0:
            r1 = r.copy()
        if keep_path:
            path[:, t] = r
    if truncated:
        log.debug("CIR full truncation applied %d times", truncated)
    return r1, r, rsum, esum, path, truncated


def simulate_cir_path(spec: CIRSpec, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """One Euler path r_1..r_n and the sum of the innovations drawn for it."""
    *_, esum, path, _ = _euler(spec, rng, 1, keep_path=True)
    return path[0], float(esum[0])


def cir_payoff(path, spec: CIRSpec):
    """exp(-h((r_1 + r_n)/2 + sum_t r_t)) M max(r_n - K, 0), along the last axis."""
    path = np.asarray(path, dtype=float)
    r1, rn = path[..., 0], path[..., -1]
    return _payoff(r1, rn, path.sum(axis=-1), spec)


def _payoff(r1, rn, rsum, spec: CIRSpec):
    disc = np.exp(-spec.h * (0.5 * (r1 + rn) + rsum))
    return disc * spec.M * np.maximum(rn - spec.K, 0.0)


def cir_importance_weight(noise_sum, spec: CIRSpec, shift=None):
    """N(0,1)^n / N(s,1)^n at the drawn innovations: exp(-s sum + n s^2 / 2)."""
    s = spec.shift if shift is None else np.asarray(shift, dtype=float)
    return np.exp(-s * np.asarray(noise_sum, dtype=float) + 0.5 * spec.n_steps * s * s)


def mixture_payoffs(spec: CIRSpec, thetas, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Simulate one path per entry of ``thetas`` (twist per path).

    Returns the importance weights and the payoffs separately.
    """
    thetas = np.asarray(thetas, dtype=float)
    shift = thetas * math.sqrt(spec.h) if spec.twist == "brownian" else thetas
    r1, rn, rsum, esum, _, _ = _euler(spec, rng, thetas.size, keep_path=False, shift=shift)
    return cir_importance_weight(esum, spec, shift), _payoff(r1, rn, rsum, spec)


def deterministic_price(spec: CIRSpec) -> float:
    """Discounted payoff along the sigma = 0 path (no sampling)."""
    path, _ = simulate_cir_path(replace(spec, sigma=0.0, theta=0.0), np.random.default_rng(0))
    return float(cir_payoff(path, spec))


class CIRCaplet(Estimator):
    """Importance-sampled caplet payoff w * p for one twist value."""

    name = "cir"
    chunk = 2048

    def __init__(self, spec: CIRSpec, cost: CostModel | None = None):
        super().__init__(cost)
        self.spec = spec
        self.name = f"cir(theta={spec.theta:g})"
        self.truncations = 0

    def values(self, rng, size):
        w, p = self.parts(rng, size)
        return w * p

    def parts(self, rng, size) -> tuple[np.ndarray, np.ndarray]:
        """Importance weights and payoffs of ``size`` fresh paths."""
        r1, rn, rsum, esum, _, trunc = _euler(self.spec, rng, size, keep_path=False)
        self.truncations += trunc
        return cir_importance_weight(esum, self.spec), _payoff(r1, rn, rsum, self.spec)


def cir_arms(base: CIRSpec | None = None, thetas=None, cost: CostModel | None = None) -> list[CIRCaplet]:
    base = base or CIRSpec()
    thetas = theta_grid() if thetas is None else thetas
    return [CIRCaplet(replace(base, theta=float(th)), cost) for th in thetas]
