"""Centralized shallow-model benchmarks: OLS, k-NN, CART, random forest,
gradient-boosted trees, and a random-search hyperparameter optimizer.

Tree growth does an exhaustive threshold scan over sorted unique feature
values with an SSE-reduction criterion. The split search is written as plain
loops and compiled with numba (nogil, so HPO candidates parallelize on a
thread pool); everything is seed-deterministic.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .data.splits import kfold

__all__ = [
    "TreeNode",
    "RegressionTree",
    "RandomForest",
    "GradientBoostedTrees",
    "HpoResult",
    "ols_fit",
    "ols_predict",
    "knn_predict",
    "cart_fit",
    "forest_fit",
    "gbt_fit",
    "random_search",
    "SEARCH_SPACES",
]


@njit(cache=True, nogil=True)
def _xorshift(state: np.uint64) -> np.uint64:
    state ^= state << np.uint64(13)
    state ^= state >> np.uint64(7)
    state ^= state << np.uint64(17)
    return state


@njit(cache=True, nogil=True)
def _grow_tree(X, y, idx, max_depth, min_leaf, max_features, seed):
    """Depth-first exact CART growth over the rows listed in `idx`.

    Returns flat node arrays: feature (-1 for leaves), threshold, left/right
    child ids and the leaf/interior mean value.
    """
    n, d = X.shape
    n_rows = idx.shape[0]
    max_nodes = 2 * n_rows + 1
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes, dtype=np.float64)

    # explicit DFS stack over (node, start, end, depth) ranges of `idx`
    stack_node = np.zeros(max_nodes, dtype=np.int64)
    stack_start = np.zeros(max_nodes, dtype=np.int64)
    stack_end = np.zeros(max_nodes, dtype=np.int64)
    stack_depth = np.zeros(max_nodes, dtype=np.int64)
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n_rows
    stack_depth[0] = 0
    n_nodes = 1
    rng_state = np.uint64(seed * 2 + 1)

    feat_pool = np.empty(d, dtype=np.int64)
    buf = np.empty(n_rows, dtype=np.int64)

    while top >= 0:
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        top -= 1
        m = end - start

        total = 0.0
        for i in range(start, end):
            total += y[idx[i]]
        value[node] = total / m

        if depth >= max_depth or m < 2 * min_leaf:
            continue

        # choose candidate features (partial Fisher-Yates when subsampling)
        for j in range(d):
            feat_pool[j] = j
        n_feat = max_features if max_features < d else d
        if n_feat < d:
            for j in range(n_feat):
                rng_state = _xorshift(rng_state)
                pick = j + int(rng_state % np.uint64(d - j))
                feat_pool[j], feat_pool[pick] = feat_pool[pick], feat_pool[j]

        best_gain = 0.0
        best_feat = -1
        best_thr = 0.0
        parent_score = total * total / m
        for jj in range(n_feat):
            f = feat_pool[jj]
            vals = np.empty(m, dtype=np.float64)
            for i in range(m):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals)
            s_left = 0.0
            for split in range(1, m):
                s_left += y[idx[start + order[split - 1]]]
                lo = vals[order[split - 1]]
                hi = vals[order[split]]
                if lo == hi:
                    continue
                if split < min_leaf or m - split < min_leaf:
                    continue
                s_right = total - s_left
                gain = s_left * s_left / split + s_right * s_right / (m - split) - parent_score
                if gain > best_gain + 1e-12:
                    best_gain = gain
                    best_feat = f
                    # midpoint, but never let float rounding reach `hi`:
                    # the partition below must match the scan count exactly
                    thr = 0.5 * (lo + hi)
                    if thr >= hi:
                        thr = lo
                    best_thr = thr
        if best_feat < 0:
            continue

        # stable two-way partition of idx[start:end]
        n_left = 0
        n_right = 0
        for i in range(start, end):
            if X[idx[i], best_feat] <= best_thr:
                idx[start + n_left] = idx[i]
                n_left += 1
            else:
                buf[n_right] = idx[i]
                n_right += 1
        for i in range(n_right):
            idx[start + n_left + i] = buf[i]

        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        top += 1
        stack_node[top] = lnode
        stack_start[top] = start
        stack_end[top] = start + n_left
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = rnode
        stack_start[top] = start + n_left
        stack_end[top] = end
        stack_depth[top] = depth + 1

    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True, nogil=True)
def _predict_tree(feature, threshold, left, right, value, X):
    n = X.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@dataclass
class TreeNode:
    """Recursive view of a fitted tree: interior split or leaf prediction."""

    value: float
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())


class RegressionTree:
    """A fitted CART stored as flat arrays, with a TreeNode view on demand."""

    def __init__(self, feature, threshold, left, right, value):
        self._feature = feature
        self._threshold = threshold
        self._left = left
        self._right = right
        self._value = value

    @property
    def n_nodes(self) -> int:
        return self._feature.shape[0]

    @property
    def root(self) -> TreeNode:
        def build(i: int) -> TreeNode:
            if self._feature[i] < 0:
                return TreeNode(value=float(self._value[i]))
            return TreeNode(
                value=float(self._value[i]),
                feature=int(self._feature[i]),
                threshold=float(self._threshold[i]),
                left=build(int(self._left[i])),
                right=build(int(self._right[i])),
            )

        return build(0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _predict_tree(self._feature, self._threshold, self._left, self._right, self._value, X)


def cart_fit(X: np.ndarray, y: np.ndarray, max_depth: int = 10, min_leaf: int = 1) -> RegressionTree:
    """Greedy SSE-reducing tree on all rows and features."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.shape[0] < min_leaf:
        raise ValueError("fewer rows than min_leaf")
    idx = np.arange(y.shape[0], dtype=np.int64)
    return RegressionTree(*_grow_tree(X, y, idx, max_depth, min_leaf, X.shape[1], 1))


class RandomForest:
    def __init__(self, trees: list[RegressionTree]):
        self.trees = trees

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.zeros(X.shape[0])
        for tree in self.trees:
            out += tree.predict(X)
        return out / len(self.trees)


def forest_fit(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int = 100,
    max_depth: int = 14,
    min_leaf: int = 2,
    feature_subsample: float = 1.0,
    bootstrap: bool = True,
    seed: int = 0,
) -> RandomForest:
    """Bootstrap rows per tree and subsample features per split."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, d = X.shape
    max_features = max(1, int(round(feature_subsample * d)))
    rng = np.random.default_rng(seed)
    trees = []
    for t in range(n_trees):
        idx = (
            rng.integers(0, n, size=n).astype(np.int64)
            if bootstrap
            else np.arange(n, dtype=np.int64)
        )
        tree_seed = int(rng.integers(1, 2**62))
        trees.append(RegressionTree(*_grow_tree(X, y, idx, max_depth, min_leaf, max_features, tree_seed)))
    return RandomForest(trees)


class GradientBoostedTrees:
    def __init__(self, base: float, lr: float, trees: list[RegressionTree]):
        self.base = base
        self.lr = lr
        self.trees = trees

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.full(X.shape[0], self.base)
        for tree in self.trees:
            out += self.lr * tree.predict(X)
        return out


def gbt_fit(
    X: np.ndarray,
    y: np.ndarray,
    n_rounds: int = 100,
    lr: float = 0.1,
    max_depth: int = 3,
    min_leaf: int = 5,
) -> GradientBoostedTrees:
    """Stage-wise residual fitting under squared loss."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    base = float(np.mean(y))
    residual = y - base
    trees = []
    idx_template = np.arange(y.shape[0], dtype=np.int64)
    for _ in range(n_rounds):
        tree = RegressionTree(*_grow_tree(X, residual, idx_template.copy(), max_depth, min_leaf, X.shape[1], 1))
        residual = residual - lr * tree.predict(X)
        trees.append(tree)
    return GradientBoostedTrees(base, lr, trees)


def ols_fit(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least squares with an intercept; returns (w_1..w_d, intercept).

    Rank-deficient designs raise instead of silently pseudo-inverting.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    A = np.column_stack([X, np.ones(X.shape[0])])
    if A.shape[0] <= A.shape[1] - 1:
        raise ValueError("need more rows than features")
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise ValueError("design matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef


def ols_predict(coef: np.ndarray, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return X @ coef[:-1] + coef[-1]


def knn_predict(
    train_X: np.ndarray, train_y: np.ndarray, query_X: np.ndarray, k: int
) -> np.ndarray:
    """Mean target of the k nearest rows under Euclidean distance.

    Distance ties break toward the lower training-row index (stable sort).
    """
    train_X = np.asarray(train_X, dtype=np.float64)
    query_X = np.asarray(query_X, dtype=np.float64)
    n = train_X.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}]")
    d2 = ((query_X[:, None, :] - train_X[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return train_y[nearest].mean(axis=1)


# --- random-search HPO ---------------------------------------------------------

SEARCH_SPACES = {
    "forest": {
        "n_trees": ("int", 50, 500),
        "max_depth": ("int", 3, 20),
        "min_leaf": ("int", 1, 10),
    },
    "gbt": {
        "n_rounds": ("int", 50, 500),
        "lr": ("log", 0.01, 0.3),
        "max_depth": ("int", 2, 8),
    },
    "knn": {"k": ("int", 1, 50)},
    "cart": {
        "max_depth": ("int", 2, 20),
        "min_leaf": ("int", 1, 20),
    },
}


def _make_predictor(family: str, config: dict, X: np.ndarray, y: np.ndarray, seed: int):
    if family == "forest":
        model = forest_fit(X, y, seed=seed, **config)
        return model.predict
    if family == "gbt":
        model = gbt_fit(X, y, **config)
        return model.predict
    if family == "cart":
        model = cart_fit(X, y, **config)
        return model.predict
    if family == "knn":
        return lambda q: knn_predict(X, y, q, config["k"])
    raise ValueError(f"unknown model family {family!r}")


def _sample_config(space: dict, rng: np.random.Generator) -> dict:
    config = {}
    for name, spec in space.items():
        kind = spec[0]
        if kind == "int":
            config[name] = int(rng.integers(spec[1], spec[2] + 1))
        elif kind == "float":
            config[name] = float(rng.uniform(spec[1], spec[2]))
        elif kind == "log":
            config[name] = float(np.exp(rng.uniform(np.log(spec[1]), np.log(spec[2]))))
        elif kind == "choice":
            config[name] = spec[1][int(rng.integers(0, len(spec[1])))]
        else:
            raise ValueError(f"unknown search dimension kind {kind!r}")
    return config


@dataclass
class HpoResult:
    best_config: dict
    best_score: float
    trials: list[tuple[dict, float]]


def random_search(
    family: str,
    space: dict,
    budget: int,
    X: np.ndarray,
    y: np.ndarray,
    cv: int = 3,
    seed: int = 0,
    score_fn=None,
    threads: int = 1,
) -> HpoResult:
    """Draw `budget` i.i.d. configs, score each by k-fold CV, return the best.

    Candidates are sampled up front from one stream and evaluated against a
    shared fold assignment, so the result is seed-deterministic and invariant
    to the number of worker threads (ties go to the earliest candidate).
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if score_fn is None:
        from .metrics import r_squared

        score_fn = r_squared
    rng = np.random.default_rng(seed)
    configs = [_sample_config(space, rng) for _ in range(budget)]
    folds = kfold(y.shape[0], k=cv, seed=seed)

    def evaluate(item):
        i, config = item
        scores = []
        for f, (train_rows, test_rows) in enumerate(folds):
            predictor = _make_predictor(
                family, config, X[train_rows], y[train_rows], seed=seed * 1000 + i * 10 + f
            )
            scores.append(score_fn(y[test_rows], predictor(X[test_rows])))
        return float(np.mean(scores))

    items = list(enumerate(configs))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(evaluate, items))
    else:
        scores = [evaluate(item) for item in items]

    best_i = int(np.argmax(scores))
    return HpoResult(
        best_config=configs[best_i],
        best_score=scores[best_i],
        trials=list(zip(configs, scores)),
    )
