"""Automatic model construction: regress a black-box objective, then search it.

A KELM surrogate is fit to (configuration, measurement) samples. Surrogates
of independent parts can be summed into one objective, regressed
constraints enter as penalties, and the result is maximized by simulated
annealing, which only needs objective values.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionError, InvalidArgumentError, UnderdeterminedError
from .kelm import KelmModel, cross_validate, predict, train

__all__ = [
    "Surrogate",
    "CompositeSurrogate",
    "PenalizedSurrogate",
    "AnnealConfig",
    "AnnealResult",
    "fit_objective_surrogate",
    "compose_surrogates",
    "with_constraints",
    "optimize_surrogate",
    "anneal",
    "grid_maximize",
    "read_samples",
    "write_result",
]

BOUNDS_MARGIN = 0.05
PENALTY_SCALE = 1e3


@dataclass
class Surrogate:
    """Scalar KELM regressor plus the box it is trusted on."""

    model: KelmModel
    bounds: np.ndarray  # (d, 2) rows of [lo, hi]
    y_std: float = 1.0
    y_range: float = 1.0

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    def __call__(self, X) -> np.ndarray | float:
        X = np.asarray(X, dtype=float)
        out = predict(self.model, X)
        return float(out[0]) if X.ndim == 1 else out[:, 0]


@dataclass
class CompositeSurrogate:
    """Sum of part surrogates on the intersection of their boxes."""

    parts: list
    bounds: np.ndarray
    y_std: float = 1.0
    y_range: float = 1.0

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    def __call__(self, X):
        return sum(p(X) for p in self.parts)


@dataclass
class PenalizedSurrogate:
    """Objective minus ``weight * max(0, g(x))`` for every regressed constraint ``g(x) <= 0``."""

    objective: object
    constraints: list
    weight: float

    @property
    def bounds(self):
        return self.objective.bounds

    @property
    def dim(self) -> int:
        return self.objective.dim

    @property
    def y_std(self) -> float:
        return self.objective.y_std

    def __call__(self, X):
        val = self.objective(X)
        for g in self.constraints:
            val = val - self.weight * np.maximum(0.0, g(X))
        return val


def _dedupe(X, y):
    _, first = np.unique(X, axis=0, return_index=True)
    keep = np.sort(first)
    return X[keep], y[keep]


def fit_objective_surrogate(X, y, c: float | None = None, gamma: float | None = None,
                            folds: int = 5, seed: int = 0) -> Surrogate:
    """Fit a scalar surrogate to samples ``(X, y)``.

    Duplicate configurations are dropped (first kept). When ``c`` or ``gamma``
    is missing, both are chosen by cross-validation. The search box is the
    sample bounding box widened by 5% of its width on each side.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise DimensionError("X and y must have the same number of samples")
    X, y = _dedupe(X, y)
    if X.shape[0] < 2:
        raise UnderdeterminedError(f"need at least 2 distinct samples, got {X.shape[0]}")
    if c is None or gamma is None:
        cv = cross_validate(X, y, folds=min(folds, X.shape[0]), seed=seed)
        c, gamma = cv.c, cv.gamma
    model = train(X, y, c, gamma)
    lo, hi = X.min(axis=0), X.max(axis=0)
    pad = BOUNDS_MARGIN * (hi - lo)
    return Surrogate(model, np.column_stack([lo - pad, hi + pad]),
                     float(y.std()), float(y.max() - y.min()))


def compose_surrogates(parts: Sequence) -> CompositeSurrogate:
    """Additive combination, e.g. delay = transmission + queuing + execution."""
    if not parts:
        raise InvalidArgumentError("need at least one part")
    dims = {p.dim for p in parts}
    if len(dims) != 1:
        raise DimensionError(f"parts disagree on input dimension: {sorted(dims)}")
    b = np.stack([p.bounds for p in parts])
    lo, hi = b[:, :, 0].max(axis=0), b[:, :, 1].min(axis=0)
    if np.any(hi < lo):
        raise InvalidArgumentError("part bounds do not overlap")
    return CompositeSurrogate(list(parts), np.column_stack([lo, hi]),
                              float(sum(p.y_std for p in parts)),
                              float(sum(p.y_range for p in parts)))


def with_constraints(objective, constraints: Sequence, weight: float | None = None) -> PenalizedSurrogate:
    """Penalize predicted violations of ``g(x) <= 0``.

    The default weight is ``1e3`` times the objective's sample range.
    """
    if weight is None:
        weight = PENALTY_SCALE * max(getattr(objective, "y_range", 1.0), 1e-12)
    return PenalizedSurrogate(objective, list(constraints), float(weight))


@dataclass(frozen=True)
class AnnealConfig:
    iterations: int = 5000
    initial_temp: float | None = None  # None: the surrogate's sample objective std
    cooling: float = 0.999
    step_scale: float = 0.1
    seed: int = 0
    restarts: int = 4

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidArgumentError("iterations must be >= 1")
        if self.initial_temp is not None and not self.initial_temp > 0:
            raise InvalidArgumentError("initial_temp must be > 0")
        if not 0 < self.cooling < 1:
            raise InvalidArgumentError("cooling must be in (0, 1)")
        if self.restarts < 1:
            raise InvalidArgumentError("restarts must be >= 1")


@dataclass
class AnnealResult:
    best_x: np.ndarray
    best_value: float
    # per iteration: (current value, best-ever value) of the winning restart
    trace: np.ndarray = field(repr=False, default_factory=lambda: np.zeros((0, 2)))
    # value change of every accepted move of the winning restart
    accepted_deltas: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))


def _reflect(x, lo, hi):
    width = hi - lo
    safe = np.where(width > 0, width, 1.0)
    t = np.mod(x - lo, 2 * safe)
    t = np.where(t > safe, 2 * safe - t, t)
    return np.where(width > 0, lo + t, lo)


def anneal(f, bounds, iterations: int, initial_temp: float, cooling: float, step_scale: float,
           rng: np.random.Generator) -> AnnealResult:
    """One simulated-annealing run maximizing ``f`` on ``bounds``."""
    b = np.asarray(bounds, dtype=float)
    lo, hi = b[:, 0], b[:, 1]
    step = step_scale * (hi - lo)
    x = lo + rng.random(lo.size) * (hi - lo)
    fx = float(f(x))
    best_x, best = x.copy(), fx
    T = initial_temp
    trace = np.empty((iterations, 2))
    deltas = []
    for t in range(iterations):
        cand = _reflect(x + step * rng.standard_normal(lo.size), lo, hi)
        fc = float(f(cand))
        delta = fc - fx
        if delta >= 0 or rng.random() < np.exp(delta / T):
            x, fx = cand, fc
            deltas.append(delta)
            if fx > best:
                best_x, best = x.copy(), fx
        trace[t] = (fx, best)
        T *= cooling
    return AnnealResult(best_x, best, trace, np.array(deltas))


def optimize_surrogate(s, cfg: AnnealConfig = AnnealConfig()) -> AnnealResult:
    """Maximize a surrogate by simulated annealing with independent restarts.

    Proposals are Gaussian with per-dimension scale ``step_scale * (hi - lo)``
    and reflect off the box. Restart ``r`` draws from seed ``(cfg.seed, r)``;
    the best run is returned.
    """
    b = np.asarray(s.bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2 or np.any(b[:, 1] < b[:, 0]):
        raise InvalidArgumentError("bounds must be rows of [lo, hi] with lo <= hi")
    T0 = cfg.initial_temp
    if T0 is None:
        T0 = getattr(s, "y_std", 1.0) or 1.0
    best = None
    for r in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, r])
        res = anneal(s, b, cfg.iterations, T0, cfg.cooling, cfg.step_scale, rng)
        if best is None or res.best_value > best.best_value:
            best = res
    return best


def grid_maximize(f, bounds, step: float = 1e-3, max_points: int = 2_000_000):
    """Exhaustive grid maximum (test oracle for low-dimensional boxes)."""
    b = np.asarray(bounds, dtype=float)
    axes = [np.arange(lo, hi + 0.5 * step, step) for lo, hi in b]
    if np.prod([a.size for a in axes]) > max_points:
        raise InvalidArgumentError("grid too large")
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, b.shape[0])
    vals = np.asarray(f(mesh))
    i = int(np.argmax(vals))
    return mesh[i], float(vals[i])


def read_samples(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``x_1..x_d,y`` CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not header or header[-1] != "y" or not all(h.startswith("x_") for h in header[:-1]):
        raise InvalidArgumentError(f"{path}: expected header x_1..x_d,y")
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    return data[:, :-1], data[:, -1]


def write_samples(X, y, path) -> None:
    X = np.asarray(X, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x_{j + 1}" for j in range(X.shape[1])] + ["y"])
        for row, v in zip(X, np.ravel(y)):
            w.writerow([repr(float(a)) for a in row] + [repr(float(v))])


def write_result(result: AnnealResult, out_dir, trace_name: str = "anneal_trace.csv") -> Path:
    """Write ``result.json`` and the annealing trace CSV into ``out_dir``."""
    out = Path(out_dir)
    with open(out / trace_name, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "current", "best"])
        for t, (cur, best) in enumerate(result.trace):
            w.writerow([t, repr(float(cur)), repr(float(best))])
    doc = {"best_config": result.best_x.tolist(), "best_value": result.best_value,
           "trace_file": trace_name}
    path = out / "result.json"
    path.write_text(json.dumps(doc, indent=2))
    return path
