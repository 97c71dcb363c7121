"""Similarity-based solution recommendation.

Historical (feature, solution) pairs are indexed by an exact kd-tree over
min-max normalized features. A new task gets the average of its k nearest
neighbours' solutions, projected back onto the power budget.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, EmptyDatasetError, InvalidArgumentError, NoReliableNeighborsError
from .kelm import Scaler, apply_scaler, fit_scaler
from .mimo import PowerAllocation, project_feasible

__all__ = [
    "KdTree",
    "FeatureIndex",
    "build_index",
    "knn_query",
    "linear_scan",
    "recommend",
    "default_radius",
    "save_index",
    "load_index",
]

LEAF_SIZE = 16


def _sq_dist(rows: np.ndarray, x: np.ndarray) -> np.ndarray:
    # shared by tree leaves and the linear scan so both produce identical floats
    diff = rows - x
    return np.einsum("ij,ij->i", diff, diff)


class KdTree:
    """Exact kd-tree with median splits on the widest dimension.

    Nodes are stored in flat arrays. Leaves hold up to ``leaf_size`` row ids.
    """

    def __init__(self, data: np.ndarray, leaf_size: int = LEAF_SIZE):
        if leaf_size < 1:
            raise InvalidArgumentError("leaf_size must be >= 1")
        self.data = np.ascontiguousarray(data, dtype=float)
        self.leaf_size = leaf_size
        self.split_dim: list[int] = []
        self.split_val: list[float] = []
        self.children: list[tuple[int, int]] = []
        self.bucket: list[np.ndarray | None] = []
        self.depth = 0
        self.root = self._build(np.arange(self.data.shape[0]), 0)

    def _new_node(self):
        self.split_dim.append(-1)
        self.split_val.append(0.0)
        self.children.append((-1, -1))
        self.bucket.append(None)
        return len(self.split_dim) - 1

    def _build(self, ids: np.ndarray, depth: int) -> int:
        node = self._new_node()
        self.depth = max(self.depth, depth)
        pts = self.data[ids]
        spread = pts.max(axis=0) - pts.min(axis=0) if ids.size else np.zeros(1)
        if ids.size <= self.leaf_size or not np.any(spread > 0):
            self.bucket[node] = ids
            return node
        dim = int(np.argmax(spread))
        # stable sort keeps row-id order inside equal coordinates
        order = ids[np.argsort(self.data[ids, dim], kind="stable")]
        mid = order.size // 2
        val = float(self.data[order[mid], dim])
        left = order[self.data[order, dim] < val]
        right = order[self.data[order, dim] >= val]
        if left.size == 0:
            # many ties at the median; split just above them instead
            left = order[self.data[order, dim] <= val]
            right = order[self.data[order, dim] > val]
            val = float(np.nextafter(val, np.inf))
        self.split_dim[node], self.split_val[node] = dim, val
        lc = self._build(left, depth + 1)
        rc = self._build(right, depth + 1)
        self.children[node] = (lc, rc)
        return node

    def query(self, x: np.ndarray, k: int) -> list[tuple[int, float]]:
        """k nearest rows as ``(row id, squared distance)``, ordered by (d2, id)."""
        heap: list[tuple[float, int]] = []  # max-heap of (-d2, -id)

        def worst():
            return -heap[0][0] if len(heap) == k else np.inf

        def visit(node):
            ids = self.bucket[node]
            if ids is not None:
                d2 = _sq_dist(self.data[ids], x)
                for i, d in zip(ids.tolist(), d2.tolist()):
                    item = (-d, -i)
                    if len(heap) < k:
                        heapq.heappush(heap, item)
                    elif item > heap[0]:
                        heapq.heapreplace(heap, item)
                return
            dim, val = self.split_dim[node], self.split_val[node]
            lc, rc = self.children[node]
            gap = x[dim] - val
            near, far = (lc, rc) if gap < 0 else (rc, lc)
            visit(near)
            # ties at the boundary must still be visited for id tie-breaking
            if gap * gap <= worst():
                visit(far)

        visit(self.root)
        return sorted(((-i, -d) for d, i in heap), key=lambda t: (t[1], t[0]))


@dataclass
class FeatureIndex:
    features: np.ndarray      # normalized, (N, d)
    solutions: np.ndarray     # (N, m)
    scaler: Scaler
    budget: float
    leaf_size: int = LEAF_SIZE
    tree: KdTree = field(init=False, repr=False)

    def __post_init__(self):
        if self.features.shape[0] != self.solutions.shape[0]:
            raise DimensionError("features and solutions must be row-aligned")
        self.tree = KdTree(self.features, self.leaf_size)

    def __len__(self):
        return self.features.shape[0]

    @property
    def depth(self) -> int:
        return self.tree.depth

    def normalize(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.features.shape[1]:
            raise DimensionError(f"index has {self.features.shape[1]} features, query has {x.size}")
        return apply_scaler(self.scaler, x[None, :])[0]


def build_index(ds, leaf_size: int = LEAF_SIZE) -> FeatureIndex:
    """Index an :class:`~alf.replay.ExperienceDataset` (or anything with
    ``features``, ``targets`` and ``meta['budget']``)."""
    F = np.asarray(ds.features, dtype=float)
    if F.ndim != 2 or F.shape[0] == 0:
        raise EmptyDatasetError("cannot index an empty dataset")
    scaler = fit_scaler(F)
    return FeatureIndex(apply_scaler(scaler, F), np.asarray(ds.targets, dtype=float),
                        scaler, float(ds.meta["budget"]), leaf_size)


def _check_k(idx: FeatureIndex, k: int):
    if not 1 <= k <= len(idx):
        raise InvalidArgumentError(f"k must be in [1, {len(idx)}], got {k}")


def knn_query(idx: FeatureIndex, x, k: int) -> list[tuple[int, float]]:
    """Exact Euclidean k-NN in normalized feature space, ascending by distance."""
    _check_k(idx, k)
    return [(i, float(np.sqrt(d))) for i, d in idx.tree.query(idx.normalize(x), k)]


def linear_scan(idx: FeatureIndex, x, k: int) -> list[tuple[int, float]]:
    """Brute-force k-NN with the same ordering rules as :func:`knn_query`."""
    _check_k(idx, k)
    d2 = _sq_dist(idx.features, idx.normalize(x))
    order = np.lexsort((np.arange(d2.size), d2))[:k]
    return [(int(i), float(np.sqrt(d2[i]))) for i in order]


def default_radius(idx: FeatureIndex, q: float = 95.0) -> float:
    """Percentile of each stored point's distance to its nearest other point."""
    if len(idx) < 2:
        return np.inf
    nn = [idx.tree.query(row, 2)[1][1] for row in idx.features]
    return float(np.sqrt(np.percentile(nn, q)))


def recommend(idx: FeatureIndex, x, k: int = 5, radius: float | str | None = None,
              weighted: bool = False) -> PowerAllocation:
    """Average the solutions of the ``k`` nearest stored tasks.

    ``radius`` enables the coverage guard: if the k-th neighbour is farther
    than ``radius`` (or the index's :func:`default_radius` when ``"auto"``),
    :class:`NoReliableNeighborsError` is raised. ``weighted`` switches to
    inverse-distance weights.
    """
    hits = knn_query(idx, x, k)
    if radius is not None:
        r = default_radius(idx) if radius == "auto" else float(radius)
        if hits[-1][1] > r:
            raise NoReliableNeighborsError(
                f"{k}-th neighbour at distance {hits[-1][1]:.4g} exceeds radius {r:.4g}")
    ids = [i for i, _ in hits]
    sols = idx.solutions[ids]
    if weighted:
        d = np.array([dist for _, dist in hits])
        if np.any(d == 0):
            w = (d == 0).astype(float)
        else:
            w = 1.0 / d
        mean = (w[:, None] * sols).sum(axis=0) / w.sum()
    else:
        mean = sols.mean(axis=0)
    return project_feasible(mean, idx.budget)


def save_index(idx: FeatureIndex, path, dataset=None) -> None:
    """Write ``<path>`` (dataset CSV) and ``<stem>.index.json`` sidecar.

    The tree itself is not stored; :func:`load_index` rebuilds it.
    """
    from .replay import ExperienceDataset, save_dataset

    path = Path(path)
    if dataset is None:
        n = idx.features.shape[1]
        feats = idx.scaler.min + idx.features * idx.scaler.span
        dataset = ExperienceDataset(feats, idx.solutions, {"n_antennas": n, "budget": idx.budget})
    save_dataset(dataset, path)
    side = {
        "kind": "feature_index",
        "scaler": idx.scaler.to_dict(),
        "leaf_size": idx.leaf_size,
        "budget": idx.budget,
        "split": "median_widest",
    }
    path.with_name(path.stem + ".index.json").write_text(json.dumps(side, indent=2))


def load_index(path) -> FeatureIndex:
    from .replay import load_dataset

    path = Path(path)
    ds = load_dataset(path)
    side = json.loads(path.with_name(path.stem + ".index.json").read_text())
    scaler = Scaler.from_dict(side["scaler"])
    return FeatureIndex(apply_scaler(scaler, ds.features), ds.targets, scaler,
                        float(side["budget"]), int(side["leaf_size"]))
