"""Bagged regression trees grown by recursive binary splitting.

Split search: at each node a random feature subset of size ``mtry`` is drawn
without replacement; candidate thresholds are the midpoints between
consecutive sorted distinct values; the winner minimizes the children's
summed squared deviations from their means. Ties break toward the lower
feature index, then the lower threshold, which makes fits reproducible.
Degenerate nodes (too small, zero variance, no valid cut) become leaves
holding the mean of the targets routed to them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# relative slack when comparing candidate SSEs across features: two features
# inducing the same partition must tie exactly, not by float noise
SPLIT_TOL = 1e-9


def improves(sse: float, best_sse: float) -> bool:
    return sse < best_sse - SPLIT_TOL * (1.0 + best_sse)


@dataclass
class _Node:
    value: float
    n: int
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _best_split_on_feature(x, y, min_leaf):
    """Best (sse, threshold) cut of one feature, or None."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order]
    n = len(ys)
    k = np.arange(1, n)
    ok = (xs[1:] != xs[:-1]) & (k >= min_leaf) & (n - k >= min_leaf)
    if not ok.any():
        return None
    c1 = np.cumsum(ys)
    c2 = np.cumsum(ys * ys)
    t1, t2 = c1[-1], c2[-1]
    l1, l2 = c1[:-1], c2[:-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        sse = (l2 - l1 * l1 / k) + ((t2 - l2) - (t1 - l1) ** 2 / (n - k))
    sse = np.where(ok, sse, np.inf)
    i = int(np.argmin(sse))  # first minimum = lowest threshold
    return float(sse[i]), float(0.5 * (xs[i] + xs[i + 1]))


@dataclass
class RegressionTree:
    root: _Node
    n_features: int
    min_leaf: int
    max_depth: int | None

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        out = np.empty(len(X))
        stack = [(self.root, np.arange(len(X)))]
        while stack:
            node, idx = stack.pop()
            if node.is_leaf:
                out[idx] = node.value
                continue
            go_left = X[idx, node.feature] <= node.threshold
            stack.append((node.left, idx[go_left]))
            stack.append((node.right, idx[~go_left]))
        return out

    def leaf_values(self) -> list[tuple[float, int]]:
        """Multiset of (mean, count) over leaves, sorted for comparison."""
        leaves = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                leaves.append((node.value, node.n))
            else:
                stack.extend((node.left, node.right))
        return sorted(leaves)


def fit_tree(X: np.ndarray, y: np.ndarray, mtry: int, min_leaf: int = 5,
             max_depth: int | None = None, rng=None) -> RegressionTree:
    """Grow one tree on (X, y) by recursive binary splitting."""
    X = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, float)
    n, p = X.shape
    mtry = min(max(1, int(mtry)), p)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng

    def grow(idx, depth):
        ynode = y[idx]
        node = _Node(value=float(ynode.mean()), n=len(idx))
        if (len(idx) < 2 * min_leaf
                or (max_depth is not None and depth >= max_depth)
                or np.all(ynode == ynode[0])):
            return node
        feats = np.sort(rng.choice(p, size=mtry, replace=False))
        best = None
        for f in feats:
            cand = _best_split_on_feature(X[idx, f], ynode, min_leaf)
            if cand is not None and (best is None or improves(cand[0], best[0])):
                best = (cand[0], int(f), cand[1])
        if best is None:
            return node
        _, node.feature, node.threshold = best
        go_left = X[idx, node.feature] <= node.threshold
        node.left = grow(idx[go_left], depth + 1)
        node.right = grow(idx[~go_left], depth + 1)
        return node

    return RegressionTree(root=grow(np.arange(n), 0), n_features=p,
                          min_leaf=min_leaf, max_depth=max_depth)


@dataclass
class ForestModel:
    trees: list[RegressionTree]
    mtry: int
    bootstrap: bool
    seed: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        if X.shape[1] != self.trees[0].n_features:
            raise ValueError(
                f"expected {self.trees[0].n_features} features, got {X.shape[1]}"
            )
        acc = np.zeros(len(X))
        for t in self.trees:
            acc += t.predict(X)
        return acc / self.n_trees


def fit_forest(X: np.ndarray, y: np.ndarray, n_trees: int = 1000,
               mtry: int | None = None, min_leaf: int = 5,
               max_depth: int | None = None, bootstrap: bool = True,
               seed: int = 0) -> ForestModel:
    """Grow ``n_trees`` trees on independent bootstrap resamples.

    Per-tree generators are spawned from one seed sequence, so results are
    reproducible and the first B trees of a larger forest match a smaller
    forest grown from the same seed.
    """
    X = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, float)
    n, p = X.shape
    if n_trees < 1:
        raise ValueError("need at least one tree")
    if mtry is None:
        mtry = max(1, p // 3)
    children = np.random.SeedSequence(seed).spawn(n_trees)
    trees = []
    for b in range(n_trees):
        rng = np.random.default_rng(children[b])
        if bootstrap:
            idx = rng.integers(0, n, size=n)
            trees.append(fit_tree(X[idx], y[idx], mtry, min_leaf, max_depth, rng))
        else:
            trees.append(fit_tree(X, y, mtry, min_leaf, max_depth, rng))
    return ForestModel(trees=trees, mtry=mtry, bootstrap=bootstrap, seed=seed)


def predict_forest(model: ForestModel, X_new: np.ndarray) -> np.ndarray:
    """Per-row mean of the tree predictions."""
    return model.predict(X_new)
