"""Experience replay for power allocation.

Optimal allocations computed by the exact solver are accumulated as
experience, filtered, and used to train a KELM that maps channel gains
straight to a power allocation. Deployment replaces the solver with one
kernel evaluation plus a feasibility projection.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import kelm
from .errors import DimensionError, EmptyDatasetError, InvalidArgumentError
from .mimo import (ChannelRealization, PowerAllocation, derive_seed, project_feasible,
                   sample_channel, throughput, uniform_allocation, waterfill)

__all__ = [
    "EnvConfig",
    "ExperienceDataset",
    "EvalReport",
    "accumulate",
    "filter_dataset",
    "split",
    "train_replay",
    "deploy_predict",
    "evaluate",
    "save_dataset",
    "load_dataset",
    "write_eval_outputs",
    "DEFAULT_INPUT_QUANTILE",
    "HIST_BINS",
]

HIST_BINS = 50
# upper percentile of the gain scaler; larger gains saturate
DEFAULT_INPUT_QUANTILE = 85.0
# cross-validation runs on at most this many training rows
CV_ROWS = 1000
FEASIBILITY_TOL = 1e-6
# wall-clock fields of EvalReport; written apart from the deterministic metrics
TIMING_FIELDS = ("predict_seconds_per_instance", "oracle_seconds_per_instance", "train_seconds")


@dataclass(frozen=True)
class EnvConfig:
    n_antennas: int = 50
    noise_power: float = 1.0
    budget: float = 20.0

    def __post_init__(self):
        if self.n_antennas < 1 or not self.noise_power > 0 or not self.budget > 0:
            raise InvalidArgumentError(f"invalid environment {self}")


@dataclass
class ExperienceDataset:
    features: np.ndarray  # (N, n) channel gains
    targets: np.ndarray   # (N, n) optimal powers
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.features.ndim != 2 or self.targets.ndim != 2:
            raise DimensionError("features and targets must be matrices")
        if self.features.shape[0] != self.targets.shape[0]:
            raise DimensionError("features and targets must be row-aligned")

    def __len__(self):
        return self.features.shape[0]

    @property
    def budget(self) -> float:
        return float(self.meta["budget"])

    @property
    def noise_power(self) -> float:
        return float(self.meta.get("noise_power", 1.0))

    def subset(self, rows) -> "ExperienceDataset":
        return ExperienceDataset(self.features[rows], self.targets[rows], dict(self.meta))

    def channel(self, i: int) -> ChannelRealization:
        return ChannelRealization(self.features[i], self.noise_power, self.budget)


def _solve_one(args):
    i, master_seed, env = args
    ch = sample_channel(env.n_antennas, env.noise_power, env.budget, seed=derive_seed(master_seed, i))
    return ch.gains, waterfill(ch).powers


def accumulate(count: int, env: EnvConfig = EnvConfig(), master_seed: int = 0,
               threads: int = 1) -> ExperienceDataset:
    """Sample ``count`` channels and store each with its water-filling optimum.

    Instance ``i`` uses seed ``master_seed ^ i``, so the result does not
    depend on ``threads``.
    """
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    t0 = time.perf_counter()
    jobs = [(i, master_seed, env) for i in range(count)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_solve_one, jobs, chunksize=256))
    else:
        rows = [_solve_one(j) for j in jobs]
    meta = {
        "n_antennas": env.n_antennas,
        "noise_power": env.noise_power,
        "budget": env.budget,
        "master_seed": int(master_seed),
        # wall-clock values: the only fields that differ between reruns
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "timing": {"accumulate_seconds": time.perf_counter() - t0},
    }
    return ExperienceDataset(np.array([r[0] for r in rows]), np.array([r[1] for r in rows]), meta)


def filter_dataset(ds: ExperienceDataset) -> ExperienceDataset:
    """Drop incomplete rows, infeasible targets and repeated feature rows.

    Order of the surviving rows is preserved; of repeated features the first
    occurrence is kept.
    """
    P = ds.budget
    tol = FEASIBILITY_TOL * P
    finite = np.all(np.isfinite(ds.features), axis=1) & np.all(np.isfinite(ds.targets), axis=1)
    with np.errstate(invalid="ignore"):
        feasible = (np.all(ds.targets >= -tol, axis=1)
                    & (np.abs(ds.targets.sum(axis=1) - P) <= tol))
    keep = finite & feasible
    seen = set()
    for i in np.nonzero(keep)[0]:
        key = ds.features[i].tobytes()
        if key in seen:
            keep[i] = False
        else:
            seen.add(key)
    if not keep.any():
        raise EmptyDatasetError("filtering removed every row")
    return ds.subset(np.nonzero(keep)[0])


def split(ds: ExperienceDataset, train_fraction: float = 0.9, seed: int = 0
          ) -> tuple[ExperienceDataset, ExperienceDataset]:
    """Seeded shuffle, then the first ``round(fraction * N)`` rows train."""
    if not 0 < train_fraction < 1:
        raise InvalidArgumentError("train_fraction must be in (0, 1)")
    n = len(ds)
    if n < 2:
        raise EmptyDatasetError("need at least 2 rows to split")
    n_train = min(max(int(round(train_fraction * n)), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))


def train_replay(train: ExperienceDataset, hyper="cv", input_quantile: float | None = DEFAULT_INPUT_QUANTILE,
                 folds: int = 5, cv_rows: int = CV_ROWS, seed: int = 0) -> kelm.KelmModel:
    """Train the gains-to-allocation KELM.

    ``hyper`` is either ``{"c": ..., "gamma": ...}`` or ``"cv"``. Under
    ``"cv"`` the grid search runs on the first ``cv_rows`` training rows and
    the chosen pair is then fit on the full set.
    """
    if len(train) == 0:
        raise EmptyDatasetError("empty training set")
    X, Y = train.features, train.targets
    info = {}
    t0 = time.perf_counter()
    if hyper == "cv":
        m = min(len(train), cv_rows)
        cv = kelm.cross_validate(X[:m], Y[:m], folds=min(folds, m), seed=seed,
                                 input_quantile=input_quantile)
        c, gamma = cv.c, cv.gamma
        info["cv_seconds"] = time.perf_counter() - t0
        info["cv_mse"] = cv.mse
    else:
        c, gamma = float(hyper["c"]), float(hyper["gamma"])
    model = kelm.train(X, Y, c, gamma, input_quantile=input_quantile)
    model.info.update(info)
    model.info["train_seconds"] = time.perf_counter() - t0
    model.info["budget"] = train.budget
    model.info["noise_power"] = train.noise_power
    return model


def deploy_predict(model: kelm.KelmModel, ch: ChannelRealization) -> PowerAllocation:
    """Predicted allocation, projected onto ``sum(p) == budget``."""
    if ch.n_antennas != model.input_dim:
        raise DimensionError(f"model is for {model.input_dim} antennas, channel has {ch.n_antennas}")
    return project_feasible(kelm.predict(model, ch.gains), ch.budget)


@dataclass
class EvalReport:
    mae: float
    mae_histogram: list            # (bin centre, density)
    mean_throughput_ratio: float
    min_throughput_ratio: float
    baseline_uniform_ratio: float
    predict_seconds_per_instance: float
    oracle_seconds_per_instance: float
    train_seconds: float
    example_oracle: list = field(default_factory=list)
    example_predicted: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(model: kelm.KelmModel, test: ExperienceDataset) -> EvalReport:
    """Error, solution quality and latency of the deployed model on ``test``.

    MAE is taken between deployed (projected) and optimal allocations in the
    model's normalized [0, 1] target units.
    """
    if len(test) == 0:
        raise EmptyDatasetError("empty test set")
    channels = [test.channel(i) for i in range(len(test))]
    t0 = time.perf_counter()
    preds = [deploy_predict(model, ch) for ch in channels]
    t1 = time.perf_counter()
    oracle = [waterfill(ch) for ch in channels]
    t2 = time.perf_counter()

    P = np.array([p.powers for p in preds])
    scaled_pred = kelm.apply_scaler(model.out_scaler, P)
    scaled_true = kelm.apply_scaler(model.out_scaler, test.targets)
    err = np.abs(scaled_pred - scaled_true).ravel()
    top = float(err.max())
    dens, edges = np.histogram(err, bins=HIST_BINS, range=(0.0, top if top > 0 else 1.0), density=True)
    centres = 0.5 * (edges[:-1] + edges[1:])

    ratios = np.array([throughput(ch, p) / throughput(ch, o) for ch, p, o in zip(channels, preds, oracle)])
    uniform = np.array([throughput(ch, uniform_allocation(ch)) / throughput(ch, o)
                        for ch, o in zip(channels, oracle)])
    n = len(test)
    return EvalReport(
        mae=float(err.mean()),
        mae_histogram=[(float(c), float(d)) for c, d in zip(centres, dens)],
        mean_throughput_ratio=float(ratios.mean()),
        min_throughput_ratio=float(ratios.min()),
        baseline_uniform_ratio=float(uniform.mean()),
        predict_seconds_per_instance=(t1 - t0) / n,
        oracle_seconds_per_instance=(t2 - t1) / n,
        train_seconds=float(model.info.get("train_seconds", 0.0)),
        example_oracle=oracle[0].powers.tolist(),
        example_predicted=preds[0].powers.tolist(),
    )


# -- files ---------------------------------------------------------------------

def _meta_path(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")


def save_dataset(ds: ExperienceDataset, path) -> None:
    """CSV ``g_1..g_n,p_1..p_n`` plus a ``<name>.meta.json`` sidecar."""
    path = Path(path)
    n = ds.features.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"g_{i + 1}" for i in range(n)] + [f"p_{i + 1}" for i in range(n)])
        for g, p in zip(ds.features, ds.targets):
            w.writerow([repr(float(v)) for v in g] + [repr(float(v)) for v in p])
    _meta_path(path).write_text(json.dumps(ds.meta, indent=2))


def load_dataset(path) -> ExperienceDataset:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader]
    n = len(header) // 2
    if len(header) != 2 * n or header[:n] != [f"g_{i + 1}" for i in range(n)] \
            or header[n:] != [f"p_{i + 1}" for i in range(n)]:
        raise InvalidArgumentError(f"{path}: expected header g_1..g_n,p_1..p_n")
    data = np.array(rows, dtype=float).reshape(len(rows), 2 * n)
    meta_file = _meta_path(path)
    meta = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    meta.setdefault("n_antennas", n)
    if "budget" not in meta and len(rows):
        # optimal allocations exhaust the budget
        meta["budget"] = float(np.median(data[:, n:].sum(axis=1)))
    return ExperienceDataset(data[:, :n], data[:, n:], meta)


def write_eval_outputs(report: EvalReport, out_dir) -> None:
    """``eval_report.json``, ``error_hist.csv`` and ``example_alloc.csv``."""
    out = Path(out_dir)
    doc = report.to_dict()
    doc.pop("mae_histogram")
    doc.pop("example_oracle")
    doc.pop("example_predicted")
    doc["timing"] = {k: doc.pop(k) for k in TIMING_FIELDS}
    (out / "eval_report.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    with open(out / "error_hist.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_center", "density"])
        w.writerows((repr(c), repr(d)) for c, d in report.mae_histogram)
    with open(out / "example_alloc.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["antenna", "oracle_p", "predicted_p"])
        for i, (o, p) in enumerate(zip(report.example_oracle, report.example_predicted)):
            w.writerow([i + 1, repr(o), repr(p)])
