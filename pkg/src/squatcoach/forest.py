"""Random forest over channel subsets of the squat tensor.

Each of the 100 trees draws a channel-subset size uniformly from
1..floor(sqrt(#channels)), picks that many channels, and trains on the
flattened (channels x 50) values of a bootstrap sample. Splits minimize
Gini impurity, trees grow without a depth limit, and every leaf keeps at
least two samples. The forest's class probabilities are vote fractions
over the trees' majority-class predictions.
"""

from __future__ import annotations

import math

import numpy as np


class DecisionTree:
    """CART-style classifier stored as parallel node arrays."""

    def __init__(self, min_leaf: int = 2):
        self.min_leaf = min_leaf
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.leaf_class: list[int] = []

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int):
        self.n_classes = n_classes
        self._build(X, y)
        return self

    def _new_node(self):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.leaf_class.append(-1)
        return len(self.feature) - 1

    def _build(self, X, y):
        node = self._new_node()
        counts = np.bincount(y, minlength=self.n_classes)
        if counts.max() == len(y) or len(y) < 2 * self.min_leaf:
            self.leaf_class[node] = int(counts.argmax())
            return node
        split = _best_gini_split(X, y, self.n_classes, self.min_leaf)
        if split is None:
            self.leaf_class[node] = int(counts.argmax())
            return node
        f, thr = split
        mask = X[:, f] <= thr
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self._build(X[mask], y[mask])
        self.right[node] = self._build(X[~mask], y[~mask])
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X), dtype=int)
        feature = np.array(self.feature)
        threshold = np.array(self.threshold)
        left, right = np.array(self.left), np.array(self.right)
        leaf_class = np.array(self.leaf_class)
        for i, row in enumerate(X):
            node = 0
            while leaf_class[node] < 0:
                node = left[node] if row[feature[node]] <= threshold[node] else right[node]
            out[i] = leaf_class[node]
        return out

    def to_dict(self):
        return {
            "min_leaf": self.min_leaf, "n_classes": self.n_classes,
            "feature": self.feature, "threshold": self.threshold,
            "left": self.left, "right": self.right, "leaf_class": self.leaf_class,
        }

    @classmethod
    def from_dict(cls, d):
        tree = cls(d["min_leaf"])
        tree.n_classes = d["n_classes"]
        tree.feature = list(d["feature"])
        tree.threshold = [float(t) for t in d["threshold"]]
        tree.left = list(d["left"])
        tree.right = list(d["right"])
        tree.leaf_class = list(d["leaf_class"])
        return tree


def _best_gini_split(X, y, n_classes, min_leaf):
    """Exact best (feature, threshold) by weighted Gini; None if no valid split."""
    n = len(y)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    parent_counts = onehot.sum(axis=0)
    parent_gini = 1.0 - ((parent_counts / n) ** 2).sum()

    best = None
    best_score = parent_gini - 1e-12  # must strictly improve
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        left_counts = np.cumsum(onehot[order], axis=0)[:-1]  # after s=1..n-1 samples
        sizes = np.arange(1, n)
        valid = (xs[1:] > xs[:-1]) & (sizes >= min_leaf) & (n - sizes >= min_leaf)
        if not valid.any():
            continue
        right_counts = parent_counts - left_counts
        gl = 1.0 - ((left_counts / sizes[:, None]) ** 2).sum(axis=1)
        gr = 1.0 - ((right_counts / (n - sizes)[:, None]) ** 2).sum(axis=1)
        score = (sizes * gl + (n - sizes) * gr) / n
        score = np.where(valid, score, np.inf)
        s = int(score.argmin())
        if score[s] < best_score:
            best_score = float(score[s])
            best = (f, float((xs[s - 1] + xs[s]) / 2.0))
    return best


class RandomForest:
    """100-tree forest with per-tree channel subsets."""

    def __init__(self, n_channels: int, n_classes: int, seed: int,
                 n_trees: int = 100, min_leaf: int = 2):
        self.n_channels = n_channels
        self.n_classes = n_classes
        self.seed = seed
        self.n_trees = n_trees
        self.min_leaf = min_leaf
        self.trees: list[DecisionTree] = []
        self.tree_channels: list[np.ndarray] = []

    @property
    def max_subset(self) -> int:
        return max(1, int(math.floor(math.sqrt(self.n_channels))))

    def fit(self, X: np.ndarray, y: np.ndarray):
        """X: (n, channels, timesteps); y: integer classes."""
        n = len(X)
        self.trees = []
        self.tree_channels = []
        for t in range(self.n_trees):
            rng = np.random.default_rng([self.seed, t])
            k = int(rng.integers(1, self.max_subset + 1))
            channels = np.sort(rng.choice(self.n_channels, size=k, replace=False))
            boot = rng.integers(0, n, size=n)
            Xt = X[boot][:, channels, :].reshape(n, -1)
            tree = DecisionTree(self.min_leaf).fit(Xt, y[boot], self.n_classes)
            self.trees.append(tree)
            self.tree_channels.append(channels)
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Vote fractions over per-tree majority classes. X: (n, C, T)."""
        X = np.asarray(X, dtype=float)
        votes = np.zeros((len(X), self.n_classes))
        for tree, channels in zip(self.trees, self.tree_channels):
            pred = tree.predict(X[:, channels, :].reshape(len(X), -1))
            votes[np.arange(len(X)), pred] += 1.0
        return votes / len(self.trees)

    def to_dict(self):
        return {
            "n_channels": self.n_channels, "n_classes": self.n_classes,
            "seed": self.seed, "n_trees": self.n_trees, "min_leaf": self.min_leaf,
            "tree_channels": [c.tolist() for c in self.tree_channels],
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        forest = cls(d["n_channels"], d["n_classes"], d["seed"],
                     n_trees=d["n_trees"], min_leaf=d["min_leaf"])
        forest.tree_channels = [np.array(c, dtype=int) for c in d["tree_channels"]]
        forest.trees = [DecisionTree.from_dict(t) for t in d["trees"]]
        return forest
