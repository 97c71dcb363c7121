"""Bayesian optimization with a Gaussian-process surrogate and expected improvement.

Maximizes a black-box function over a box. Each round fits an RBF GP to all
observations (inputs scaled to the unit cube, outputs standardized), scores
a fresh set of uniform candidates by expected improvement and queries the
best one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.stats import norm

from .errors import DimensionError, IllConditionedError, InvalidArgumentError
from .kelm import KernelSpec, kernel_matrix

__all__ = [
    "GpModel",
    "gp_posterior",
    "expected_improvement",
    "loo_error",
    "select_gamma",
    "latin_hypercube",
    "BayesResult",
    "bayes_optimize",
    "random_search",
    "write_history",
]

GAMMA_GRID = (0.1, 1.0, 10.0)
JITTER_SCHEDULE = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)


@dataclass
class GpModel:
    X: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    y: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kernel: KernelSpec = field(default_factory=KernelSpec)
    noise_var: float = 1e-6

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.shape[0] != self.y.size:
            raise DimensionError("X and y must have the same number of observations")
        if self.noise_var < 0:
            raise InvalidArgumentError("noise_var must be >= 0")
        self._factor = None

    def factor(self):
        if self._factor is None:
            K = kernel_matrix(self.X, self.X, self.kernel)
            n = K.shape[0]
            for jitter in JITTER_SCHEDULE:
                A = K.copy()
                A[np.diag_indices(n)] += self.noise_var + jitter
                try:
                    self._factor = cho_factor(A, lower=True, check_finite=False)
                    break
                except LinAlgError:
                    continue
            else:
                raise IllConditionedError(f"GP covariance of size {n} is singular beyond jitter")
            self._alpha = cho_solve(self._factor, self.y, check_finite=False)
        return self._factor


def gp_posterior(gp: GpModel, x) -> tuple[float, float]:
    """Posterior mean and variance at a single point ``x`` (zero prior mean)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if gp.y.size == 0:
        return 0.0, 1.0
    if x.size != gp.X.shape[1]:
        raise DimensionError(f"GP has {gp.X.shape[1]} inputs, got {x.size}")
    mean, var = _posterior_batch(gp, x[None, :])
    return float(mean[0]), float(var[0])


def _posterior_batch(gp: GpModel, Xq: np.ndarray):
    if gp.y.size == 0:
        return np.zeros(Xq.shape[0]), np.ones(Xq.shape[0])
    factor = gp.factor()
    Ks = kernel_matrix(Xq, gp.X, gp.kernel)
    mean = Ks @ gp._alpha
    v = cho_solve(factor, Ks.T, check_finite=False)
    var = 1.0 - np.einsum("ij,ji->i", Ks, v)
    return mean, np.maximum(var, 0.0)


def expected_improvement(mean, variance, best_so_far: float, xi: float = 0.0):
    """EI for maximization; works elementwise on arrays."""
    mean = np.asarray(mean, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    gain = mean - best_so_far - xi
    # tiny sigma can overflow z**2 inside the pdf; the limit 0 is correct
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        z = np.where(sigma > 0, gain / np.where(sigma > 0, sigma, 1.0), 0.0)
        ei = np.where(sigma > 0, gain * norm.cdf(z) + sigma * norm.pdf(z), np.maximum(gain, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def loo_error(X, y, gamma: float, noise_var: float) -> float:
    """Mean squared leave-one-out residual, in closed form."""
    gp = GpModel(X, y, KernelSpec(gamma), noise_var)
    factor = gp.factor()
    Kinv = cho_solve(factor, np.eye(y.size), check_finite=False)
    resid = gp._alpha / np.diag(Kinv)
    return float(np.mean(resid ** 2))


def select_gamma(X, y, noise_var: float, grid=GAMMA_GRID) -> float:
    if len(y) < 2:
        return float(grid[len(grid) // 2])
    errs = []
    for g in grid:
        try:
            errs.append(loo_error(X, y, g, noise_var))
        except IllConditionedError:
            errs.append(np.inf)
    return float(grid[int(np.argmin(errs))])


def latin_hypercube(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """One point per stratum in every dimension, in the unit cube."""
    u = (rng.random((n, d)) + np.arange(n)[:, None]) / n
    for j in range(d):
        u[:, j] = u[rng.permutation(n), j]
    return u


@dataclass
class BayesResult:
    best_x: np.ndarray
    best_y: float
    # rows of (round, x, y, best_so_far)
    history: list = field(default_factory=list)

    @property
    def best_trace(self) -> np.ndarray:
        return np.array([h[3] for h in self.history])


def _bounds(bounds) -> np.ndarray:
    b = np.asarray(bounds, dtype=float)
    if b.ndim == 1:
        b = b[None, :]
    if b.shape[1] != 2 or np.any(b[:, 1] < b[:, 0]):
        raise InvalidArgumentError("bounds must be rows of [lo, hi] with lo <= hi")
    return b


def _record(history, x, y):
    best = y if not history else max(history[-1][3], y)
    history.append((len(history), np.array(x), float(y), float(best)))


def bayes_optimize(black_box: Callable[[np.ndarray], float], bounds, budget: int = 20,
                   init: int = 5, seed: int = 0, n_candidates: int = 512, xi: float = 0.01,
                   noise_var: float = 1e-6) -> BayesResult:
    """Maximize ``black_box`` over the box ``bounds`` with ``budget`` evaluations.

    The first ``init`` evaluations come from a Latin hypercube design; every
    later one maximizes expected improvement over ``n_candidates`` seeded
    uniform points. ``xi`` is measured in standardized output units.
    """
    if not budget >= init >= 1:
        raise InvalidArgumentError("need budget >= init >= 1")
    b = _bounds(bounds)
    lo, width = b[:, 0], b[:, 1] - b[:, 0]
    d = b.shape[0]
    rng = np.random.default_rng(seed)
    U = list(latin_hypercube(init, d, rng))
    Y: list[float] = []
    history: list = []
    for u in U:
        x = lo + u * width
        y = float(black_box(x))
        Y.append(y)
        _record(history, x, y)
    for _ in range(budget - init):
        Ua, Ya = np.array(U), np.array(Y)
        scale = Ya.std()
        Yz = (Ya - Ya.mean()) / (scale if scale > 0 else 1.0)
        gamma = select_gamma(Ua, Yz, noise_var)
        gp = GpModel(Ua, Yz, KernelSpec(gamma), noise_var)
        cand = rng.random((n_candidates, d))
        mean, var = _posterior_batch(gp, cand)
        ei = expected_improvement(mean, var, Yz.max(), xi)
        u = cand[int(np.argmax(ei))]
        x = lo + u * width
        y = float(black_box(x))
        U.append(u)
        Y.append(y)
        _record(history, x, y)
    i = int(np.argmax(Y))
    return BayesResult(lo + np.asarray(U[i]) * width, Y[i], history)


def random_search(black_box: Callable[[np.ndarray], float], bounds, budget: int = 20,
                  seed: int = 0) -> BayesResult:
    """Uniform random search baseline with the same result type."""
    b = _bounds(bounds)
    rng = np.random.default_rng(seed)
    history: list = []
    xs, ys = [], []
    for _ in range(budget):
        x = b[:, 0] + rng.random(b.shape[0]) * (b[:, 1] - b[:, 0])
        y = float(black_box(x))
        xs.append(x)
        ys.append(y)
        _record(history, x, y)
    i = int(np.argmax(ys))
    return BayesResult(xs[i], ys[i], history)


def write_history(result: BayesResult, path) -> None:
    d = result.history[0][1].size if result.history else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round"] + [f"x_{j + 1}" for j in range(d)] + ["y", "best_so_far"])
        for r, x, y, best in result.history:
            w.writerow([r] + [repr(float(v)) for v in x] + [repr(y), repr(best)])
