"""Kernel extreme learning machine (multi-output RBF kernel ridge regression).

Training solves ``(K + I/c) B = Y`` on min-max normalized data, where
``K[i, j] = exp(-gamma * ||x_i - x_j||^2)``. Prediction is ``k(x)^T B``
followed by denormalization.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.spatial.distance import cdist

from .errors import DimensionError, EmptyDatasetError, IllConditionedError, InvalidArgumentError

__all__ = [
    "KernelSpec",
    "Scaler",
    "KelmModel",
    "CVResult",
    "kernel_matrix",
    "fit_scaler",
    "apply_scaler",
    "invert_scaler",
    "train",
    "predict",
    "predict_normalized",
    "cross_validate",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
    "DEFAULT_GAMMA_GRID",
    "DEFAULT_C_GRID",
]

DEFAULT_GAMMA_GRID = tuple(2.0 ** e for e in range(-6, 5))
DEFAULT_C_GRID = tuple(2.0 ** e for e in range(0, 15))

# diagonal jitter tried in order when the Cholesky factorization fails
JITTER_SCHEDULE = (0.0, 1e-12, 1e-8, 1e-6)

# scaled test inputs are clipped to this range to limit extrapolation
INPUT_CLIP = (-0.1, 1.1)


@dataclass(frozen=True)
class KernelSpec:
    gamma: float = 1.0

    def __post_init__(self):
        if not self.gamma >= 0:
            raise InvalidArgumentError(f"gamma must be >= 0, got {self.gamma}")


def _spec(spec) -> KernelSpec:
    return spec if isinstance(spec, KernelSpec) else KernelSpec(float(spec))


@dataclass(frozen=True)
class Scaler:
    """Per-column min-max bounds.

    A saturating scaler clips scaled values to [0, 1]; it is what
    :func:`fit_scaler` returns when the upper bound is a quantile rather
    than the column maximum.
    """

    min: np.ndarray
    max: np.ndarray
    saturate: bool = False

    def __post_init__(self):
        lo = np.array(self.min, dtype=float).ravel()
        hi = np.array(self.max, dtype=float).ravel()
        if lo.shape != hi.shape or np.any(hi < lo):
            raise InvalidArgumentError("scaler needs max >= min per column")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def span(self) -> np.ndarray:
        return self.max - self.min

    def to_dict(self) -> dict:
        return {"min": self.min.tolist(), "max": self.max.tolist(), "saturate": self.saturate}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(np.array(d["min"], dtype=float), np.array(d["max"], dtype=float),
                   bool(d.get("saturate", False)))


def _as_2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {a.shape}")
    return a


def kernel_matrix(X, Z, spec) -> np.ndarray:
    """RBF Gram matrix between the rows of ``X`` and ``Z``."""
    X, Z = _as_2d(X), _as_2d(Z)
    if X.shape[1] != Z.shape[1]:
        raise DimensionError(f"dimension mismatch: {X.shape[1]} vs {Z.shape[1]}")
    gamma = _spec(spec).gamma
    d2 = cdist(X, Z, "sqeuclidean")
    return np.exp(-gamma * d2)


def fit_scaler(data, upper_quantile: float | None = None) -> Scaler:
    """Column bounds of ``data``.

    With ``upper_quantile`` (percent, < 100) the upper bound is that
    per-column percentile and the scaler saturates above it, which keeps
    heavy-tailed columns from being squashed towards 0.
    """
    data = _as_2d(data)
    if data.shape[0] == 0:
        raise EmptyDatasetError("cannot fit a scaler on empty data")
    lo = data.min(axis=0)
    if upper_quantile is None or upper_quantile >= 100:
        return Scaler(lo, data.max(axis=0))
    if not 0 < upper_quantile:
        raise InvalidArgumentError("upper_quantile must be in (0, 100]")
    return Scaler(lo, np.maximum(np.percentile(data, upper_quantile, axis=0), lo), saturate=True)


def apply_scaler(scaler: Scaler, data, clip: tuple[float, float] | None = None) -> np.ndarray:
    """Map columns affinely to [0, 1]; constant columns map to 0.5."""
    data = _as_2d(data)
    if data.shape[1] != scaler.min.size:
        raise DimensionError(f"scaler has {scaler.min.size} columns, data has {data.shape[1]}")
    span = scaler.span
    flat = span == 0
    out = (data - scaler.min) / np.where(flat, 1.0, span)
    out[:, flat] = 0.5
    if scaler.saturate:
        np.clip(out, 0.0, 1.0, out=out)
    elif clip is not None:
        np.clip(out, clip[0], clip[1], out=out)
    return out


def invert_scaler(scaler: Scaler, data) -> np.ndarray:
    data = _as_2d(data)
    return scaler.min + data * scaler.span


@dataclass
class KelmModel:
    anchors: np.ndarray
    weights: np.ndarray
    kernel: KernelSpec
    c: float
    in_scaler: Scaler
    out_scaler: Scaler
    # run metadata (timings, cv table); not serialized
    info: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def input_dim(self) -> int:
        return self.anchors.shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def gamma(self) -> float:
        return self.kernel.gamma


def _spd_solve(K: np.ndarray, ridge: float, Y: np.ndarray) -> np.ndarray:
    """Solve ``(K + ridge*I) B = Y`` by Cholesky with jitter escalation."""
    n = K.shape[0]
    for jitter in JITTER_SCHEDULE:
        A = K.copy()
        A[np.diag_indices(n)] += ridge + jitter
        try:
            factor = cho_factor(A, lower=True, check_finite=False)
        except LinAlgError:
            continue
        B = cho_solve(factor, Y, check_finite=False)
        if not np.all(np.isfinite(B)):
            continue
        # one step of iterative refinement against the unjittered system
        A[np.diag_indices(n)] -= jitter
        B += cho_solve(factor, Y - A @ B, check_finite=False)
        return B
    raise IllConditionedError(f"kernel system of size {n} is not positive definite even with jitter "
                              f"{JITTER_SCHEDULE[-1]:g}")


def _fit_normalized(Xn, Yn, c, spec) -> np.ndarray:
    K = kernel_matrix(Xn, Xn, spec)
    return _spd_solve(K, 1.0 / c, Yn)


def train(X, Y, c: float, spec, input_quantile: float | None = None) -> KelmModel:
    """Train a KELM regressor.

    Parameters
    ----------
    X : array_like, shape (N, d)
        Raw inputs.
    Y : array_like, shape (N, m) or (N,)
        Raw targets.
    c : float
        Regularization constant; the ridge added to the kernel is ``1/c``.
    spec : KernelSpec or float
        RBF kernel, or its ``gamma``.
    input_quantile : float, optional
        Percentile used as the upper input bound (saturating scaler).
        Default is the plain column maximum.

    Returns
    -------
    KelmModel
    """
    X, Y = _as_2d(X), _as_2d(Y)
    if X.shape[0] < 1:
        raise EmptyDatasetError("training needs at least one row")
    if X.shape[0] != Y.shape[0]:
        raise DimensionError(f"X has {X.shape[0]} rows, Y has {Y.shape[0]}")
    if not c > 0:
        raise InvalidArgumentError(f"c must be > 0, got {c}")
    spec = _spec(spec)
    t0 = time.perf_counter()
    in_scaler, out_scaler = fit_scaler(X, input_quantile), fit_scaler(Y)
    Xn = apply_scaler(in_scaler, X)
    Yn = apply_scaler(out_scaler, Y)
    B = _fit_normalized(Xn, Yn, c, spec)
    model = KelmModel(Xn, B, spec, float(c), in_scaler, out_scaler)
    model.info["train_seconds"] = time.perf_counter() - t0
    return model


def predict_normalized(model: KelmModel, X) -> np.ndarray:
    """Outputs in the model's normalized [0, 1] target units, shape (n, m)."""
    X = np.asarray(X, dtype=float)
    X2 = X[None, :] if X.ndim == 1 else X
    if X2.shape[1] != model.input_dim:
        raise DimensionError(f"model expects {model.input_dim} inputs, got {X2.shape[1]}")
    Xn = apply_scaler(model.in_scaler, X2, clip=INPUT_CLIP)
    return kernel_matrix(Xn, model.anchors, model.kernel) @ model.weights


def predict(model: KelmModel, X) -> np.ndarray:
    """Denormalized prediction for one input vector or a batch of rows."""
    X = np.asarray(X, dtype=float)
    out = invert_scaler(model.out_scaler, predict_normalized(model, X))
    return out[0] if X.ndim == 1 else out


class CVResult(NamedTuple):
    c: float
    gamma: float
    mse: np.ndarray  # fold-mean validation MSE, shape (len(c_grid), len(gamma_grid))


def fold_indices(n: int, folds: int, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return np.array_split(rng.permutation(n), folds)


def cross_validate(X, Y, folds: int = 5, c_grid=DEFAULT_C_GRID, gamma_grid=DEFAULT_GAMMA_GRID,
                   seed: int = 0, input_quantile: float | None = None) -> CVResult:
    """Grid search over ``(c, gamma)`` by k-fold validation MSE.

    Data is min-max normalized once on the full set so every fold is scored
    in the same [0, 1] units. Ties go to the smaller ``c``, then the smaller
    ``gamma``.
    """
    X, Y = _as_2d(X), _as_2d(Y)
    if folds < 2:
        raise InvalidArgumentError("folds must be >= 2")
    if X.shape[0] < folds:
        raise InvalidArgumentError(f"{X.shape[0]} rows cannot fill {folds} folds")
    if len(c_grid) == 0 or len(gamma_grid) == 0:
        raise InvalidArgumentError("grids must be non-empty")
    c_grid = sorted(float(c) for c in c_grid)
    gamma_grid = sorted(float(g) for g in gamma_grid)
    Xn = apply_scaler(fit_scaler(X, input_quantile), X)
    Yn = apply_scaler(fit_scaler(Y), Y)
    d2 = cdist(Xn, Xn, "sqeuclidean")
    parts = fold_indices(X.shape[0], folds, seed)
    mse = np.zeros((len(c_grid), len(gamma_grid)))
    for j, gamma in enumerate(gamma_grid):
        K = np.exp(-gamma * d2)
        for k, val in enumerate(parts):
            tr = np.concatenate([p for i, p in enumerate(parts) if i != k])
            Ktr = K[np.ix_(tr, tr)]
            Kva = K[np.ix_(val, tr)]
            for i, c in enumerate(c_grid):
                B = _spd_solve(Ktr, 1.0 / c, Yn[tr])
                mse[i, j] += np.mean((Kva @ B - Yn[val]) ** 2)
    mse /= folds
    # argmin over a c-major flattening gives the documented tie order
    i, j = np.unravel_index(int(np.argmin(mse)), mse.shape)
    return CVResult(c_grid[i], gamma_grid[j], mse)


def model_to_dict(model: KelmModel) -> dict:
    return {
        "kind": "kelm",
        "gamma": model.kernel.gamma,
        "c": model.c,
        "anchors": model.anchors.tolist(),
        "weights": model.weights.tolist(),
        "in_scaler": model.in_scaler.to_dict(),
        "out_scaler": model.out_scaler.to_dict(),
    }


def model_from_dict(d: dict) -> KelmModel:
    if d.get("kind") != "kelm":
        raise InvalidArgumentError(f"not a kelm model document: kind={d.get('kind')!r}")
    anchors = np.array(d["anchors"], dtype=float)
    weights = np.array(d["weights"], dtype=float)
    if anchors.shape[0] != weights.shape[0]:
        raise DimensionError("anchors and weights must have the same row count")
    return KelmModel(anchors, weights, KernelSpec(float(d["gamma"])), float(d["c"]),
                     Scaler.from_dict(d["in_scaler"]), Scaler.from_dict(d["out_scaler"]))


def save_model(model: KelmModel, path) -> None:
    # json writes floats with repr(), which round-trips every double exactly
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path) -> KelmModel:
    return model_from_dict(json.loads(Path(path).read_text()))
