"""Annealed importance sampling with coordinate-wise slice sampling.

Chains are advanced in parallel: every array below carries a leading chain
axis, so one call produces a whole batch of independent AIS weights.

For a target written as prior(x) * L(x) with a normalised prior, the
annealed densities are f_beta(x) = prior(x) L(x)^beta and a chain started
from the prior accumulates

    log w = sum_j (beta_j - beta_{j-1}) log L(x_{j-1}),

moving x with a slice-sampling sweep that leaves f_{beta_j} invariant
between consecutive increments.  E[w] is the normaliser Z.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import expit, logsumexp

from .base import CostModel, Estimator, Observation

MAX_STEP_OUT = 100_000


def ais_schedule(n_anneal: int) -> np.ndarray:
    """Power-of-4 schedule: ({0, 1/(n-1), ..., 1})^4."""
    if n_anneal < 2:
        raise ValueError("need at least two annealing temperatures")
    return np.linspace(0.0, 1.0, n_anneal) ** 4


# ---------------------------------------------------------------------------
# slice sampling
# ---------------------------------------------------------------------------


def slice_sweep(
    x: np.ndarray,
    logf: Callable[[np.ndarray], np.ndarray],
    width: float,
    rng: np.random.Generator,
    fx: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One stepping-out/shrinkage slice update per coordinate, in order.

    ``x`` has shape (chains, dim); ``logf`` maps such arrays to (chains,).
    Returns the new points and their log densities.
    """
    x = np.array(x, dtype=float, copy=True)
    if x.ndim != 2:
        raise ValueError("x must have shape (chains, dim)")
    fx = logf(x) if fx is None else np.array(fx, dtype=float)
    if not np.all(np.isfinite(fx)):
        raise ValueError("log density is not finite at the starting point")
    n, d = x.shape
    for i in range(d):
        level = fx - rng.exponential(size=n)
        left = x[:, i] - width * rng.random(n)
        right = left + width
        _step_out(x, i, left, level, logf, -width)
        _step_out(x, i, right, level, logf, width)
        todo = np.arange(n)
        for _ in range(MAX_STEP_OUT):
            if todo.size == 0:
                break
            lo, hi = left[todo], right[todo]
            prop = lo + rng.random(todo.size) * (hi - lo)
            trial = x[todo].copy()
            trial[:, i] = prop
            f = logf(trial)
            ok = f > level[todo]
            acc = todo[ok]
            x[acc, i] = prop[ok]
            fx[acc] = f[ok]
            rej = todo[~ok]
            below = prop[~ok] < x[rej, i]
            left[rej[below]] = prop[~ok][below]
            right[rej[~below]] = prop[~ok][~below]
            todo = rej
        else:
            raise RuntimeError("slice shrinkage did not terminate")
    return x, fx


def _step_out(x, i, edge, level, logf, step):
    todo = np.arange(x.shape[0])
    for _ in range(MAX_STEP_OUT):
        if todo.size == 0:
            return
        trial = x[todo].copy()
        trial[:, i] = edge[todo]
        inside = logf(trial) > level[todo]
        todo = todo[inside]
        edge[todo] += step
    raise RuntimeError("slice stepping-out did not terminate; is the density proper?")


def slice_sample_step(x, logdensity: Callable[[np.ndarray], float], width: float, rng: np.random.Generator) -> np.ndarray:
    """Single-chain convenience wrapper around ``slice_sweep``.

    ``logdensity`` takes a 1-D point and returns a float.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))

    def batched(pts):
        return np.array([logdensity(p) for p in pts], dtype=float)

    out, _ = slice_sweep(x[None, :], batched, width, rng)
    return out[0]


# ---------------------------------------------------------------------------
# targets
# ---------------------------------------------------------------------------


class Target:
    """prior(x) * L(x) with a normalised Gaussian prior N(0, prior_var I)."""

    dim: int
    prior_var: float
    log_z: float | None = None

    def log_prior(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        sq = np.einsum("...i,...i->...", x, x)
        return -0.5 * sq / self.prior_var - 0.5 * self.dim * math.log(2 * math.pi * self.prior_var)

    def sample_prior(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return math.sqrt(self.prior_var) * rng.standard_normal((size, self.dim))

    def log_likelihood(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class GaussianToy(Target):
    """Gaussian-mixture likelihood L(x) = sum_j w_j exp(-a |x - m_j|^2 / 2).

    Z has a closed form, which makes this the reference target for checking
    AIS.  One component gives a unimodal posterior; two well separated
    components of unequal weight give a bimodal one on which slice moves
    stop crossing between modes late in the schedule.
    """

    def __init__(self, dim: int = 1, prior_var: float = 1.0, precision: float = 2.0, centers=None, weights=None):
        self.dim = int(dim)
        self.prior_var = float(prior_var)
        self.precision = float(precision)
        centers = np.zeros((1, self.dim)) if centers is None else np.atleast_2d(np.asarray(centers, dtype=float))
        if centers.shape[1] != self.dim:
            centers = np.broadcast_to(centers.reshape(-1, 1), (centers.size, self.dim)).copy()
        self.centers = centers
        w = np.ones(len(centers)) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (len(centers),) or np.any(w <= 0):
            raise ValueError("need one positive weight per center")
        self.log_weights = np.log(w)
        shrink = 1.0 + self.precision * self.prior_var
        comp = self.log_weights - 0.5 * self.dim * math.log(shrink) - 0.5 * self.precision * np.sum(self.centers**2, axis=1) / shrink
        self.log_z = float(logsumexp(comp))

    def log_likelihood(self, x):
        x = np.asarray(x, dtype=float)
        if len(self.centers) == 1:
            diff = x - self.centers[0]
            return self.log_weights[0] - 0.5 * self.precision * np.einsum("...i,...i->...", diff, diff)
        sq = np.sum((x[..., None, :] - self.centers) ** 2, axis=-1)
        comp = self.log_weights - 0.5 * self.precision * sq
        top = comp.max(axis=-1)
        return top + np.log(np.exp(comp - top[..., None]).sum(axis=-1))


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.shape[0] != self.y.size:
            raise ValueError("feature rows and labels differ in length")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("features must be finite")
        if not np.all((self.y == 0) | (self.y == 1)):
            raise ValueError("labels must be 0 or 1")

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def head(self, n: int) -> "Dataset":
        return Dataset(self.X[:n], self.y[:n], self.feature_names)


def standardize(X: np.ndarray) -> np.ndarray:
    sd = X.std(axis=0)
    return (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def load_dataset_csv(path, standardize_features: bool = True) -> Dataset:
    """Comma-separated, header row, last column the 0/1 label."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: need a header row and at least one data row")
    header, body = rows[0], [r for r in rows[1:] if r]
    try:
        data = np.array([[float(v) for v in r] for r in body])
    except ValueError as err:
        raise ValueError(f"{path}: non-numeric entry ({err})") from None
    if data.ndim != 2 or data.shape[1] != len(header) or data.shape[1] < 2:
        raise ValueError(f"{path}: ragged rows or fewer than two columns")
    X = data[:, :-1]
    if standardize_features:
        X = standardize(X)
    return Dataset(X, data[:, -1], header[:-1])


def synthetic_logistic_dataset(n: int, dim: int, rng: np.random.Generator, prior_var: float = 0.05) -> Dataset:
    """Draw theta* from the prior, standard-normal features, y ~ Ber(sigmoid(theta* . x))."""
    theta = math.sqrt(prior_var) * rng.standard_normal(dim)
    X = standardize(rng.standard_normal((n, dim))) if n > 1 else rng.standard_normal((n, dim))
    y = (rng.random(n) < expit(X @ theta)).astype(float)
    return Dataset(X, y, [f"x{i}" for i in range(dim)])


def logistic_log_likelihood(theta: np.ndarray, data: Dataset) -> np.ndarray:
    z = np.asarray(theta, dtype=float) @ data.X.T
    return np.sum(data.y * z - np.logaddexp(0.0, z), axis=-1)


def logistic_posterior_logdensity(theta, data: Dataset, prior_var: float = 0.05) -> np.ndarray:
    """log N(theta; 0, prior_var I) + sum_t log p(y_t | x_t, theta)."""
    theta = np.asarray(theta, dtype=float)
    d = theta.shape[-1]
    lp = -0.5 * np.sum(theta * theta, axis=-1) / prior_var - 0.5 * d * math.log(2 * math.pi * prior_var)
    if data.X.shape[0] == 0:
        return lp
    return lp + logistic_log_likelihood(theta, data)


def logistic_posterior_grad(theta, data: Dataset, prior_var: float = 0.05) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    g = -theta / prior_var
    if data.X.shape[0]:
        g = g + (data.y - expit(theta @ data.X.T)) @ data.X
    return g


class LogisticRegressionTarget(Target):
    def __init__(self, data: Dataset, prior_var: float = 0.05):
        self.data = data
        self.dim = data.dim
        self.prior_var = float(prior_var)

    def log_likelihood(self, x):
        if self.data.X.shape[0] == 0:
            return np.zeros(np.shape(x)[:-1])
        return logistic_log_likelihood(x, self.data)


# ---------------------------------------------------------------------------
# the estimator
# ---------------------------------------------------------------------------


@dataclass
class AISSpec:
    n_anneal: int
    target: Target
    schedule: np.ndarray | None = None
    slice_width: float = 1.0
    log_offset: float = 0.0

    def __post_init__(self):
        if self.schedule is None:
            self.schedule = ais_schedule(self.n_anneal)
        self.schedule = np.asarray(self.schedule, dtype=float)
        b = self.schedule
        if b.size != self.n_anneal or b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) < 0):
            raise ValueError("schedule must be nondecreasing from 0 to 1 with n_anneal entries")
        if self.slice_width <= 0:
            raise ValueError("slice width must be positive")


def ais_log_weights(spec: AISSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    target, b = spec.target, spec.schedule
    x = target.sample_prior(rng, size)
    ll = target.log_likelihood(x)
    logw = np.zeros(size)
    last = b.size - 1
    for j in range(1, b.size):
        logw += (b[j] - b[j - 1]) * ll
        if j == last:
            break
        beta = b[j]

        def logf(z, beta=beta):
            return target.log_prior(z) + beta * target.log_likelihood(z)

        x, _ = slice_sweep(x, logf, spec.slice_width, rng, fx=target.log_prior(x) + beta * ll)
        ll = target.log_likelihood(x)
    return logw


class AISEstimator(Estimator):
    """One AIS weight per draw (scaled by exp(-log_offset)); E[value] = Z."""

    name = "ais"
    chunk = 2048

    def __init__(self, spec: AISSpec, cost: CostModel | None = None, unit_cost: float = 1.0, overhead: float = 0.0):
        # default simulated cost: a fixed per-draw overhead plus one unit per
        # annealing step, with mean-one lognormal jitter
        if cost is None:
            cost = CostModel("lognormal", mean=overhead + spec.n_anneal * unit_cost, sigma=0.1)
        super().__init__(cost)
        self.spec = spec
        self.name = f"ais({spec.n_anneal})"
        if spec.target.log_z is not None:
            self.true_mean = math.exp(spec.target.log_z - spec.log_offset)

    def values(self, rng, size):
        return np.exp(ais_log_weights(self.spec, rng, size) - self.spec.log_offset)


def ais_draw(spec: AISSpec, rng: np.random.Generator, cost: CostModel | None = None) -> Observation:
    return AISEstimator(spec, cost).draw(rng)
