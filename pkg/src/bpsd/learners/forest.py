from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels as K

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    k_candidates: int | None = None  # None -> ceil(sqrt(d))
    min_split: int = 2
    max_depth: int | None = None
    mode: str = "ERT"  # "ERT" or "RF"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("ERT", "RF"):
            raise ValueError(f"mode must be ERT or RF, got {self.mode!r}")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, n_classes) weighted training counts
    gain: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return K.apply_tree(self.feature, self.threshold, self.left, self.right, X)

    def leaf_proba(self) -> np.ndarray:
        tot = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, tot, out=np.zeros_like(self.counts), where=tot > 0)

    def same_structure(self, other: "Tree") -> bool:
        return all(
            np.array_equal(getattr(self, a), getattr(other, a))
            for a in ("feature", "threshold", "left", "right", "counts")
        )

    def to_records(self) -> list[dict]:
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                nodes.append(
                    {
                        "feature": int(self.feature[i]),
                        "threshold": float(self.threshold[i]),
                        "left": int(self.left[i]),
                        "right": int(self.right[i]),
                        "gain": float(self.gain[i]),
                    }
                )
            else:
                nodes.append({"counts": self.counts[i].tolist()})
        return nodes

    @classmethod
    def from_records(cls, nodes: list[dict], n_classes: int) -> "Tree":
        n = len(nodes)
        feature = np.full(n, -1, dtype=np.int64)
        threshold = np.zeros(n)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        counts = np.zeros((n, n_classes))
        gain = np.zeros(n)
        for i, rec in enumerate(nodes):
            if "counts" in rec:
                counts[i] = rec["counts"]
            else:
                feature[i], threshold[i] = rec["feature"], rec["threshold"]
                left[i], right[i], gain[i] = rec["left"], rec["right"], rec.get("gain", 0.0)
        # internal counts are not serialized; rebuild them bottom-up from leaves
        for i in range(n - 1, -1, -1):
            if feature[i] >= 0:
                counts[i] = counts[left[i]] + counts[right[i]]
        return cls(feature, threshold, left, right, counts, gain)


@dataclass(eq=False)
class Forest:
    trees: list[Tree]
    n_classes: int
    n_features: int
    params: ForestParams

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.zeros((len(X), self.n_classes))
        for tree in self.trees:
            out += tree.leaf_proba()[tree.apply(X)]
        out /= len(self.trees)
        return out[0] if single else out

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=-1)

    def feature_importances(self) -> np.ndarray:
        """Mean decrease in Gini impurity per feature, normalized to sum to 1."""
        total = np.zeros(self.n_features)
        for tree in self.trees:
            imp = np.zeros(self.n_features)
            internal = tree.feature >= 0
            np.add.at(imp, tree.feature[internal], tree.gain[internal])
            s = imp.sum()
            if s > 0:
                total += imp / s
        s = total.sum()
        return total / s if s > 0 else total

    def same_structure(self, other: "Forest") -> bool:
        return len(self.trees) == len(other.trees) and all(
            a.same_structure(b) for a, b in zip(self.trees, other.trees)
        )

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "forest",
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "params": asdict(self.params),
            "trees": [t.to_records() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        if d.get("format_version") != FORMAT_VERSION or d.get("kind") != "forest":
            raise ValueError("not a forest record of a supported format_version")
        trees = [Tree.from_records(t, d["n_classes"]) for t in d["trees"]]
        return cls(trees, d["n_classes"], d["n_features"], ForestParams(**d["params"]))


def tree_key(seed: int, tree_index: int) -> np.uint64:
    return np.uint64(K.make_tree_key(np.uint64(seed % (1 << 64)), tree_index))


def fit_forest(X: np.ndarray, y: np.ndarray, n_classes: int, params: ForestParams = ForestParams()) -> Forest:
    """Fit an RF (bootstrap, exhaustive Gini thresholds) or ERT (full set, one random
    threshold per candidate feature) forest."""
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("cannot fit a forest on an empty training set")
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError("labels must lie in [0, n_classes)")
    d = X.shape[1]
    k = params.k_candidates or max(1, math.ceil(math.sqrt(d)))
    max_depth = -1 if params.max_depth is None else params.max_depth
    mode = K.MODE_ERT if params.mode == "ERT" else K.MODE_RF

    row_keys = K.row_hashes(X, y) if mode == K.MODE_RF else None
    if row_keys is not None:
        # identical rows get distinct keys by occurrence rank, which is order-independent
        order = np.argsort(row_keys, kind="stable")
        sorted_keys = row_keys[order]
        first = np.r_[True, sorted_keys[1:] != sorted_keys[:-1]]
        group_start = np.maximum.accumulate(np.where(first, np.arange(len(order)), 0))
        rank = np.empty(len(order), dtype=np.uint64)
        rank[order] = (np.arange(len(order)) - group_start).astype(np.uint64)
        row_keys = K.combine_keys(row_keys, rank)

    ones = np.ones(len(X))
    trees = []
    for t in range(params.n_trees):
        key = tree_key(params.seed, t)
        w = ones if row_keys is None else K.poisson_weights(row_keys, key)
        if not w.any():
            w = ones
        arrays = K.build_tree(X, y, w, n_classes, mode, k, params.min_split, max_depth, key)
        trees.append(Tree(*arrays))
    return Forest(trees, n_classes, d, params)
