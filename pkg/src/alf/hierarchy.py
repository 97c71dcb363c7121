"""Clustering-based hierarchical power allocation.

Antennas are grouped by k-means on their gains. A cluster-level problem, in
which every antenna of a cluster is replaced by a pseudo-antenna at the
cluster centroid gain, decides each cluster's share of the budget. Each
share is then water-filled over the true gains inside the cluster.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import InvalidArgumentError
from .mimo import ChannelRealization, PowerAllocation, sample_channel, throughput, waterfill

__all__ = [
    "Clustering",
    "kmeans",
    "hierarchical_allocate",
    "performance_loss",
    "LossReport",
    "loss_sweep",
    "write_sweep_csv",
]


@dataclass
class Clustering:
    assignments: np.ndarray
    centroids: np.ndarray
    k: int
    inertia: float
    # inertia after every Lloyd iteration
    trace: list[float] = field(default_factory=list, repr=False)
    iterations: int = 0


def _as_points(points) -> np.ndarray:
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def _sq_dists(X, C):
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _plusplus_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            i = int(rng.choice(n, p=d2 / total))
        else:
            # all remaining points coincide with a centre; pick an unused index
            free = np.setdiff1d(np.arange(n), chosen)
            i = int(rng.choice(free))
        chosen.append(i)
        d2 = np.minimum(d2, ((X - X[i]) ** 2).sum(axis=1))
    return X[chosen].copy()


def _repair_empty(X, labels, C, k):
    """Give each empty cluster the point farthest from its own centroid."""
    for j in range(k):
        counts = np.bincount(labels, minlength=k)
        if counts[j] > 0:
            continue
        d = ((X - C[labels]) ** 2).sum(axis=1)
        d[counts[labels] <= 1] = -1.0  # never empty another cluster
        i = int(np.argmax(d))
        labels[i] = j
        C[j] = X[i]
    return labels


def kmeans(points, k: int, seed: int = 0, max_iter: int = 300) -> Clustering:
    """Lloyd's algorithm with k-means++ seeding.

    Iterates until the assignments stop changing or ``max_iter`` is hit.
    Distance ties go to the lower cluster index.
    """
    X = _as_points(points)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise InvalidArgumentError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    C = _plusplus_init(X, k, rng)
    labels = np.full(n, -1)
    trace = []
    it = 0
    for it in range(1, max_iter + 1):
        new = np.argmin(_sq_dists(X, C), axis=1)
        new = _repair_empty(X, new, C, k)
        changed = not np.array_equal(new, labels)
        labels = new
        for j in range(k):
            C[j] = X[labels == j].mean(axis=0)
        trace.append(float(((X - C[labels]) ** 2).sum()))
        if not changed:
            break
    inertia = float(((X - C[labels]) ** 2).sum())
    centroids = C[:, 0] if np.ndim(points) == 1 else C
    return Clustering(labels, centroids, k, inertia, trace, it)


def hierarchical_allocate(ch: ChannelRealization, k: int, seed: int = 0
                          ) -> tuple[PowerAllocation, Clustering]:
    """Two-level allocation: cluster budgets first, then water-filling inside."""
    clus = kmeans(ch.gains, k, seed=seed)
    counts = np.bincount(clus.assignments, minlength=k)
    # effective instance: counts[j] pseudo-antennas at each centroid gain
    owner = np.repeat(np.arange(k), counts)
    effective = ChannelRealization(np.repeat(clus.centroids, counts), ch.noise_power, ch.budget)
    pseudo = waterfill(effective).powers
    shares = np.bincount(owner, weights=pseudo, minlength=k)
    p = np.zeros(ch.n_antennas)
    for j in range(k):
        members = np.nonzero(clus.assignments == j)[0]
        if shares[j] <= 0:
            continue
        sub = ChannelRealization(ch.gains[members], ch.noise_power, shares[j])
        p[members] = waterfill(sub).powers
    return PowerAllocation(p), clus


class LossReport(NamedTuple):
    ratio: float
    hier_seconds: float
    flat_seconds: float


def performance_loss(ch: ChannelRealization, k: int, seed: int = 0) -> LossReport:
    """Throughput of the hierarchical allocation relative to the flat optimum."""
    t0 = time.perf_counter()
    hier, _ = hierarchical_allocate(ch, k, seed)
    t1 = time.perf_counter()
    flat = waterfill(ch)
    t2 = time.perf_counter()
    return LossReport(throughput(ch, hier) / throughput(ch, flat), t1 - t0, t2 - t1)


def loss_sweep(ks, n: int = 50, seeds=range(100), noise_power: float = 1.0,
               budget: float = 20.0) -> list[dict]:
    """Mean/std loss ratio and mean timings per ``k`` over channel seeds."""
    rows = []
    channels = [sample_channel(n, noise_power, budget, seed=s) for s in seeds]
    for k in ks:
        reps = [performance_loss(ch, k, seed=s) for s, ch in zip(seeds, channels)]
        ratios = np.array([r.ratio for r in reps])
        rows.append({
            "k": int(k),
            "mean_ratio": float(ratios.mean()),
            "std_ratio": float(ratios.std()),
            "min_ratio": float(ratios.min()),
            "max_ratio": float(ratios.max()),
            "hier_seconds": float(np.mean([r.hier_seconds for r in reps])),
            "flat_seconds": float(np.mean([r.flat_seconds for r in reps])),
        })
    return rows


def write_sweep_csv(rows, path) -> None:
    cols = ["k", "mean_ratio", "std_ratio", "hier_seconds", "flat_seconds"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([r["k"]] + [repr(r[c]) for c in cols[1:]])
