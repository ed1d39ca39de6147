"""Bagged CART regression forest.

Trees are grown on bootstrap resamples with per-split feature subsampling
and a variance-reduction split criterion; the ensemble prediction is the
mean of tree outputs. Everything is deterministic in the bootstrap seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..seeds import rng_for


@dataclass(frozen=True)
class ForestParams:
    n_trees: int
    max_depth: int
    min_samples_leaf: int = 1
    feature_subsample: float = 1.0
    bootstrap_seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("n_trees, max_depth and min_samples_leaf must be >= 1")
        if not 0.0 < self.feature_subsample <= 1.0:
            raise ValueError(f"feature_subsample must be in (0, 1], got {self.feature_subsample}")


class _Tree:
    """Flat-array binary tree; leaves have feature == -1."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def finalize(self):
        self.feature = np.asarray(self.feature, dtype=np.int64)
        self.threshold = np.asarray(self.threshold, dtype=float)
        self.left = np.asarray(self.left, dtype=np.int64)
        self.right = np.asarray(self.right, dtype=np.int64)
        self.value = np.asarray(self.value, dtype=float)

    def predict(self, X: np.ndarray) -> np.ndarray:
        current = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            internal = self.feature[current] >= 0
            if not internal.any():
                break
            idx = np.nonzero(internal)[0]
            nodes = current[idx]
            go_left = X[idx, self.feature[nodes]] <= self.threshold[nodes]
            current[idx] = np.where(go_left, self.left[nodes], self.right[nodes])
        return self.value[current]


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    max_depth: int,
    min_samples_leaf: int,
    n_sub: int,
) -> _Tree:
    n, d = X.shape
    tree = _Tree()
    root = tree.new_node()
    all_feats = np.arange(d)
    stack: list[tuple[int, np.ndarray, int]] = [(root, np.arange(n), 0)]
    while stack:
        node, rows, depth = stack.pop()
        ys = y[rows]
        m = len(rows)
        total1 = float(np.add.reduce(ys))
        tree.value[node] = total1 / m
        if depth >= max_depth or m < 2 * min_samples_leaf:
            continue
        if np.minimum.reduce(ys) == np.maximum.reduce(ys):
            continue
        feats = rng.choice(d, size=n_sub, replace=False) if n_sub < d else all_feats
        Xs = X[np.ix_(rows, feats)]
        order = np.argsort(Xs, axis=0, kind="stable")
        col_idx = np.arange(Xs.shape[1])
        xs_sorted = Xs[order, col_idx]
        ys_sorted = ys[order]
        c1 = np.cumsum(ys_sorted, axis=0)[:-1]
        c2 = np.cumsum(ys_sorted * ys_sorted, axis=0)
        total2 = c2[-1]
        c2 = c2[:-1]
        n_left = np.arange(1, m, dtype=float)[:, None]
        sse = (c2 - c1 * c1 / n_left) + ((total2 - c2) - (total1 - c1) ** 2 / (m - n_left))
        valid = xs_sorted[:-1] < xs_sorted[1:]
        if min_samples_leaf > 1:
            valid[: min_samples_leaf - 1] = False
            valid[m - min_samples_leaf :] = False
        if not valid.any():
            continue
        sse[~valid] = np.inf
        flat = int(np.argmin(sse))
        pos, feat_idx = divmod(flat, sse.shape[1])
        threshold = 0.5 * (xs_sorted[pos, feat_idx] + xs_sorted[pos + 1, feat_idx])
        left_rows = rows[order[: pos + 1, feat_idx]]
        right_rows = rows[order[pos + 1 :, feat_idx]]
        tree.feature[node] = int(feats[feat_idx])
        tree.threshold[node] = float(threshold)
        left = tree.new_node()
        right = tree.new_node()
        tree.left[node] = left
        tree.right[node] = right
        stack.append((right, right_rows, depth + 1))
        stack.append((left, left_rows, depth + 1))
    tree.finalize()
    return tree


@dataclass
class FittedForest:
    params: ForestParams
    trees: list[_Tree]
    n_features: int

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected shape (n, {self.n_features}), got {X.shape}")
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)

    def to_dict(self) -> dict:
        def node(tree: _Tree, idx: int) -> dict:
            if tree.feature[idx] < 0:
                return {"value": float(tree.value[idx])}
            return {
                "feature": int(tree.feature[idx]),
                "threshold": float(tree.threshold[idx]),
                "left": node(tree, int(tree.left[idx])),
                "right": node(tree, int(tree.right[idx])),
            }

        return {
            "kind": "forest",
            "n_features": self.n_features,
            "params": {
                "n_trees": self.params.n_trees,
                "max_depth": self.params.max_depth,
                "min_samples_leaf": self.params.min_samples_leaf,
                "feature_subsample": self.params.feature_subsample,
                "bootstrap_seed": self.params.bootstrap_seed,
            },
            "trees": [node(t, 0) for t in self.trees],
        }

    @staticmethod
    def from_dict(doc: dict) -> "FittedForest":
        def build(tree: _Tree, spec: dict) -> int:
            idx = tree.new_node()
            if "value" in spec:
                tree.value[idx] = spec["value"]
            else:
                tree.feature[idx] = spec["feature"]
                tree.threshold[idx] = spec["threshold"]
                tree.left[idx] = build(tree, spec["left"])
                tree.right[idx] = build(tree, spec["right"])
            return idx

        trees = []
        for tree_spec in doc["trees"]:
            tree = _Tree()
            build(tree, tree_spec)
            tree.finalize()
            trees.append(tree)
        return FittedForest(
            params=ForestParams(**doc["params"]), trees=trees, n_features=doc["n_features"]
        )


def fit_forest(X, y, params: ForestParams) -> FittedForest:
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise ValueError("X must be 2-D with one row per y entry and at least one row")
    n, d = X.shape
    n_sub = max(1, int(round(params.feature_subsample * d)))
    trees = []
    for t in range(params.n_trees):
        rng = rng_for(params.bootstrap_seed, "tree", t)
        rows = rng.integers(0, n, size=n)
        trees.append(
            _grow_tree(X[rows], y[rows], rng, params.max_depth, params.min_samples_leaf, n_sub)
        )
    return FittedForest(params=params, trees=trees, n_features=d)


def forest_search_space(n_features: int, scale: str = "paper") -> dict:
    """Hyperparameter space for the forest.

    The paper scale is the full space for real experiment runs; the desk
    scale shrinks only the counts so test runs stay fast.
    """
    sqrt_frac = math.sqrt(n_features) / n_features
    if scale == "paper":
        return {
            "n_trees": ("int", 50, 300),
            "max_depth": ("int", 4, 24),
            "min_samples_leaf": [1, 2, 5],
            "feature_subsample": [1.0 / 3.0, sqrt_frac, 1.0],
        }
    if scale == "desk":
        return {
            "n_trees": [6, 12],
            "max_depth": [5, 8],
            "min_samples_leaf": [2, 5],
            "feature_subsample": [sqrt_frac, 1.0 / 3.0],
        }
    raise ValueError(f"unknown scale {scale!r}")
