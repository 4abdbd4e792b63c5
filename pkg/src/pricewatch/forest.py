"""From-scratch tree ensembles over the full feature matrix.

Both models share one flattened node-array tree layout and one vectorized
batch traversal. Missing values (NaN in the matrix) are routed at every split
to the child that received the majority of the training rows, so no row is
ever dropped. All randomness is derived per tree as seed + tree_index, which
makes results independent of fitting order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class ForestFitError(ValueError):
    pass


@dataclass
class TreeArrays:
    """One tree in flat arrays; feature -1 marks a leaf.

    Split rule: x <= threshold goes left, x > threshold goes right, NaN goes
    to the recorded majority side. leaf_value is model-specific (path-length
    contribution for isolation trees, class vote for decision trees).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    missing_left: np.ndarray
    leaf_value: np.ndarray

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "missing_left": self.missing_left,
            "leaf_value": self.leaf_value,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TreeArrays":
        return cls(**doc)


class _TreeBuilder:
    """Accumulates nodes during construction, then freezes to TreeArrays."""

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.missing_left: list[bool] = []
        self.leaf_value: list[float] = []

    def add_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.missing_left.append(True)
        self.leaf_value.append(0.0)
        return len(self.feature) - 1

    def set_leaf(self, pos: int, value: float) -> None:
        self.feature[pos] = -1
        self.leaf_value[pos] = value

    def set_split(self, pos: int, feature: int, threshold: float, missing_left: bool) -> tuple[int, int]:
        self.feature[pos] = feature
        self.threshold[pos] = threshold
        self.missing_left[pos] = missing_left
        left = self.add_node()
        right = self.add_node()
        self.left[pos] = left
        self.right[pos] = right
        return left, right

    def freeze(self) -> TreeArrays:
        return TreeArrays(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            missing_left=np.asarray(self.missing_left, dtype=bool),
            leaf_value=np.asarray(self.leaf_value, dtype=np.float64),
        )


def propagate(tree: TreeArrays, X: np.ndarray) -> np.ndarray:
    """Route every row of X to its leaf and return the leaf values."""
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int32)
    while True:
        feat = tree.feature[node]
        active = np.flatnonzero(feat >= 0)
        if active.size == 0:
            return tree.leaf_value[node]
        nd = node[active]
        fv = X[active, tree.feature[nd]]
        go_left = fv <= tree.threshold[nd]
        missing = np.isnan(fv)
        if missing.any():
            go_left = np.where(missing, tree.missing_left[nd], go_left)
        node[active] = np.where(go_left, tree.left[nd], tree.right[nd])


def average_path_factor(n: int) -> float:
    """Expected unsuccessful-search path length in a random binary tree of n points."""
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    harmonic = math.log(n - 1) + np.euler_gamma
    return 2.0 * harmonic - 2.0 * (n - 1) / n


# ---------------------------------------------------------------------------
# Isolation forest
# ---------------------------------------------------------------------------


@dataclass
class IsolationForestConfig:
    n_trees: int = 100
    subsample_fraction: float = 0.05
    feature_fraction: float = 0.10
    seed: int = 0


@dataclass
class IsolationForestModel:
    trees: list[TreeArrays]
    config: IsolationForestConfig
    subsample_size: int
    n_features: int
    threshold: Optional[float] = None  # set by threshold selection

    def to_dict(self) -> dict:
        return {
            "trees": [t.to_dict() for t in self.trees],
            "n_trees": self.config.n_trees,
            "subsample_fraction": self.config.subsample_fraction,
            "feature_fraction": self.config.feature_fraction,
            "seed": self.config.seed,
            "subsample_size": self.subsample_size,
            "n_features": self.n_features,
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "IsolationForestModel":
        model = cls(
            trees=[TreeArrays.from_dict(t) for t in doc["trees"]],
            config=IsolationForestConfig(
                n_trees=doc["n_trees"],
                subsample_fraction=doc["subsample_fraction"],
                feature_fraction=doc["feature_fraction"],
                seed=doc["seed"],
            ),
            subsample_size=doc["subsample_size"],
            n_features=doc["n_features"],
        )
        model.threshold = doc["threshold"]
        return model


def _build_isolation_tree(
    X: np.ndarray,
    rows: np.ndarray,
    features: np.ndarray,
    depth_cap: int,
    rng: np.random.Generator,
) -> TreeArrays:
    builder = _TreeBuilder()
    stack = [(rows, 0, builder.add_node())]
    while stack:
        node_rows, depth, pos = stack.pop()
        n_node = node_rows.size
        if n_node <= 1 or depth >= depth_cap:
            builder.set_leaf(pos, depth + average_path_factor(n_node))
            continue

        sub = X[node_rows][:, features]
        nan = np.isnan(sub)
        lo = np.min(np.where(nan, np.inf, sub), axis=0)
        hi = np.max(np.where(nan, -np.inf, sub), axis=0)
        usable = np.flatnonzero(np.isfinite(lo) & np.isfinite(hi) & (lo < hi))
        if usable.size == 0:
            builder.set_leaf(pos, depth + average_path_factor(n_node))
            continue

        pick = usable[rng.integers(usable.size)]
        f = int(features[pick])
        cut = rng.uniform(lo[pick], hi[pick])

        vals = X[node_rows, f]
        present = ~np.isnan(vals)
        go_left = present & (vals <= cut)
        go_right = present & (vals > cut)
        missing_left = go_left.sum() >= go_right.sum()
        if missing_left:
            go_left |= ~present
        else:
            go_right |= ~present

        left_pos, right_pos = builder.set_split(pos, f, cut, missing_left)
        stack.append((node_rows[go_right], depth + 1, right_pos))
        stack.append((node_rows[go_left], depth + 1, left_pos))
    return builder.freeze()


def fit_iforest(X: np.ndarray, config: Optional[IsolationForestConfig] = None) -> IsolationForestModel:
    """Fit isolation trees on independent row subsamples and feature subsets."""
    config = config or IsolationForestConfig()
    n, d = X.shape
    if n < 2:
        raise ForestFitError(f"need >= 2 rows, got {n}")

    sub_size = max(1, round(config.subsample_fraction * n))
    usable_cols = np.flatnonzero(~np.isnan(X).all(axis=0))
    if usable_cols.size == 0:
        raise ForestFitError("every feature column is fully masked")
    f_size = max(1, round(config.feature_fraction * usable_cols.size))
    depth_cap = math.ceil(math.log2(sub_size)) if sub_size > 1 else 0

    trees = []
    for i in range(config.n_trees):
        rng = np.random.default_rng(config.seed + i)
        rows = rng.choice(n, size=sub_size, replace=False)
        feats = usable_cols[rng.choice(usable_cols.size, size=f_size, replace=False)]
        trees.append(_build_isolation_tree(X, rows, feats, depth_cap, rng))

    return IsolationForestModel(
        trees=trees, config=config, subsample_size=sub_size, n_features=d
    )


def iforest_path_lengths(model: IsolationForestModel, X: np.ndarray) -> np.ndarray:
    """Mean isolation path length per row, averaged over trees."""
    total = np.zeros(X.shape[0], dtype=np.float64)
    for tree in model.trees:
        total += propagate(tree, X)
    return total / len(model.trees)


def score_iforest_batch(model: IsolationForestModel, X: np.ndarray) -> np.ndarray:
    """Normalized anomaly scores: 2^(-mean_path / expected_path(subsample))."""
    norm = average_path_factor(model.subsample_size)
    paths = iforest_path_lengths(model, X)
    if norm <= 0.0:
        # Degenerate single-point trees: every row sits at the convention point.
        return np.full(X.shape[0], 0.5)
    return np.power(2.0, -paths / norm)


def score_iforest(model: IsolationForestModel, vector: np.ndarray) -> float:
    return float(score_iforest_batch(model, vector.reshape(1, -1))[0])


# ---------------------------------------------------------------------------
# Random forest
# ---------------------------------------------------------------------------


@dataclass
class RandomForestConfig:
    n_trees: int = 100
    max_depth: int = 20
    min_samples_split: int = 2
    features_per_split: Optional[int] = None  # default round(sqrt(d))
    class_weight: str = "balanced"
    seed: int = 0


@dataclass
class RandomForestModel:
    trees: list[TreeArrays]
    config: RandomForestConfig
    n_features: int
    class_weights: tuple[float, float]
    threshold: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "trees": [t.to_dict() for t in self.trees],
            "n_trees": self.config.n_trees,
            "max_depth": self.config.max_depth,
            "min_samples_split": self.config.min_samples_split,
            "features_per_split": self.config.features_per_split,
            "class_weight": self.config.class_weight,
            "seed": self.config.seed,
            "n_features": self.n_features,
            "class_weights": list(self.class_weights),
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RandomForestModel":
        model = cls(
            trees=[TreeArrays.from_dict(t) for t in doc["trees"]],
            config=RandomForestConfig(
                n_trees=doc["n_trees"],
                max_depth=doc["max_depth"],
                min_samples_split=doc["min_samples_split"],
                features_per_split=doc["features_per_split"],
                class_weight=doc["class_weight"],
                seed=doc["seed"],
            ),
            n_features=doc["n_features"],
            class_weights=tuple(doc["class_weights"]),
        )
        model.threshold = doc["threshold"]
        return model


def _best_split(
    X: np.ndarray,
    rows: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    feats: np.ndarray,
    parent_cost: float,
) -> Optional[tuple[int, float]]:
    """Exhaustive weighted-Gini search over midpoint candidates per feature."""
    best_cost = parent_cost
    best: Optional[tuple[int, float]] = None
    labels = y[rows]
    weights = w[rows]

    for f in feats:
        vals = X[rows, f]
        present = ~np.isnan(vals)
        if present.sum() < 2:
            continue
        pv = vals[present]
        order = np.argsort(pv, kind="stable")
        sv = pv[order]
        distinct = sv[1:] != sv[:-1]
        if not distinct.any():
            continue
        sw = weights[present][order]
        sw1 = sw * labels[present][order]

        cw = np.cumsum(sw)
        cw1 = np.cumsum(sw1)
        total_w = cw[-1]
        total_w1 = cw1[-1]

        cuts = np.flatnonzero(distinct)  # split between cuts[k] and cuts[k]+1
        wl = cw[cuts]
        wl1 = cw1[cuts]
        wl0 = wl - wl1
        wr = total_w - wl
        wr1 = total_w1 - wl1
        wr0 = wr - wr1
        gini_l = 1.0 - ((wl0 / wl) ** 2 + (wl1 / wl) ** 2)
        gini_r = 1.0 - ((wr0 / wr) ** 2 + (wr1 / wr) ** 2)
        cost = (wl * gini_l + wr * gini_r) / total_w

        k = int(np.argmin(cost))
        if cost[k] < best_cost:
            best_cost = float(cost[k])
            best = (int(f), float((sv[cuts[k]] + sv[cuts[k] + 1]) / 2.0))
    return best


def _build_decision_tree(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    rows: np.ndarray,
    m_feats: int,
    config: RandomForestConfig,
    rng: np.random.Generator,
) -> TreeArrays:
    d = X.shape[1]
    builder = _TreeBuilder()
    stack = [(rows, 0, builder.add_node())]
    while stack:
        node_rows, depth, pos = stack.pop()
        labels = y[node_rows]
        weights = w[node_rows]
        w1 = float(weights[labels == 1].sum())
        w0 = float(weights.sum()) - w1

        vote = 1.0 if w1 > w0 else 0.0
        if (
            depth >= config.max_depth
            or node_rows.size < config.min_samples_split
            or w0 == 0.0
            or w1 == 0.0
        ):
            builder.set_leaf(pos, vote)
            continue

        total = w0 + w1
        parent_cost = 1.0 - ((w0 / total) ** 2 + (w1 / total) ** 2)
        feats = rng.choice(d, size=m_feats, replace=False)
        found = _best_split(X, node_rows, y, w, feats, parent_cost)
        if found is None:
            builder.set_leaf(pos, vote)
            continue

        f, cut = found
        vals = X[node_rows, f]
        present = ~np.isnan(vals)
        go_left = present & (vals <= cut)
        go_right = present & (vals > cut)
        missing_left = go_left.sum() >= go_right.sum()
        if missing_left:
            go_left |= ~present
        else:
            go_right |= ~present

        left_pos, right_pos = builder.set_split(pos, f, cut, missing_left)
        stack.append((node_rows[go_right], depth + 1, right_pos))
        stack.append((node_rows[go_left], depth + 1, left_pos))
    return builder.freeze()


def fit_rf(
    X: np.ndarray,
    y: np.ndarray,
    config: Optional[RandomForestConfig] = None,
) -> RandomForestModel:
    """Fit Gini decision trees on bootstrap resamples with per-split feature sampling.

    Class weights are inversely proportional to class frequency, which keeps
    the minority class visible to the split criterion under extreme imbalance.
    """
    config = config or RandomForestConfig()
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ForestFitError("both classes must be present in the training labels")

    if config.class_weight == "balanced":
        cw = (n / (2.0 * n_neg), n / (2.0 * n_pos))
    else:
        cw = (1.0, 1.0)
    w = np.where(y == 1, cw[1], cw[0])

    m_feats = config.features_per_split or max(1, round(math.sqrt(d)))
    m_feats = min(m_feats, d)

    trees = []
    for i in range(config.n_trees):
        rng = np.random.default_rng(config.seed + i)
        boot = rng.integers(0, n, size=n)
        trees.append(_build_decision_tree(X, y, w, boot, m_feats, config, rng))

    return RandomForestModel(trees=trees, config=config, n_features=d, class_weights=cw)


def predict_rf_batch(model: RandomForestModel, X: np.ndarray) -> np.ndarray:
    """Anomaly probability per row: the fraction of trees voting anomaly."""
    votes = np.zeros(X.shape[0], dtype=np.float64)
    for tree in model.trees:
        votes += propagate(tree, X)
    return votes / len(model.trees)


def predict_rf(model: RandomForestModel, vector: np.ndarray) -> tuple[bool, float]:
    """Decision plus probability for one vector; probability strictly above threshold flags."""
    if model.threshold is None:
        raise ValueError("model has no threshold set; run threshold selection first")
    prob = float(predict_rf_batch(model, vector.reshape(1, -1))[0])
    return prob > model.threshold, prob
