"""
Shallow comparison classifiers on flattened windows.

Both models consume fixed-length vectors built by :func:`flatten`, which lays
the window out time-major (all channels of step 0, then step 1, ...). Both
return a score equal to an estimate of P(Stable) so ROC curves can be drawn
the same way as for the LSTM.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, Label, TimeSeriesInstance, window
from .errors import EmptyInputError, MissingLabelError, ShapeError


@dataclass(frozen=True, eq=False)
class FlatSample:
    features: np.ndarray
    label: Label


def flatten(instance: TimeSeriesInstance, otw_steps: int) -> FlatSample:
    if instance.label is None:
        raise MissingLabelError(f"instance {instance.id} has no label")
    w = window(instance, otw_steps)
    return FlatSample(w.series.reshape(-1).copy(), instance.label)


def flatten_dataset(ds: Dataset, otw_steps: int, require_labels: bool = True):
    """Return ``(X, y)`` with ``y`` as class indices (0 stable, 1 unstable)."""
    X = ds.series_array()[:, :otw_steps].reshape(len(ds), -1)
    if require_labels:
        return X, ds.label_indices()
    return X, None


def _as_xy(samples):
    if isinstance(samples, tuple) and len(samples) == 2:
        X, y = samples
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
    else:
        samples = list(samples)
        if not samples:
            raise EmptyInputError("no training samples")
        X = np.stack([s.features for s in samples]).astype(np.float64)
        y = np.array([s.label.index for s in samples], dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ShapeError(f"features {X.shape} and labels {y.shape} are inconsistent")
    if len(X) == 0:
        raise EmptyInputError("no training samples")
    return X, y


def _features(sample):
    if isinstance(sample, FlatSample):
        return sample.features
    return np.asarray(sample, dtype=np.float64)


def _label_for(score: float) -> Label:
    return Label.STABLE if score > 0.5 else Label.UNSTABLE


# ---------------------------------------------------------------------------
# CART


@dataclass
class Node:
    counts: tuple  # (n_stable, n_unstable)
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass
class CartTree:
    nodes: list = field(default_factory=list)
    max_depth: int = 8
    min_leaf: int = 5
    n_features: int = 0

    def depth(self) -> int:
        def rec(k):
            node = self.nodes[k]
            return 0 if node.is_leaf else 1 + max(rec(node.left), rec(node.right))
        return rec(0)

    def to_dict(self) -> dict:
        return {
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "n_features": self.n_features,
            "nodes": [[list(n.counts), n.feature, n.threshold, n.left, n.right] for n in self.nodes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CartTree":
        nodes = [Node(tuple(int(c) for c in counts), int(f), float(t), int(lf), int(rt))
                 for counts, f, t, lf, rt in d["nodes"]]
        return cls(nodes, int(d["max_depth"]), int(d["min_leaf"]), int(d["n_features"]))


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


def best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Lowest weighted-Gini split as ``(impurity, feature, threshold)`` or ``None``.

    Thresholds are midpoints between consecutive distinct values; a split
    sends ``x <= threshold`` left. Ties go to the lowest feature index, then
    the lowest threshold.
    """
    n = len(y)
    best = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        unstable = np.cumsum(y[order])
        n_left = np.arange(1, n + 1)
        # candidate cut after position k (left = first k+1 samples)
        valid = xs[:-1] < xs[1:]
        k = np.nonzero(valid)[0]
        k = k[(n_left[k] >= min_leaf) & (n - n_left[k] >= min_leaf)]
        if k.size == 0:
            continue
        nl = n_left[k].astype(np.float64)
        nr = n - nl
        ul = unstable[k].astype(np.float64)
        ur = unstable[-1] - ul
        gl = 1.0 - (ul / nl) ** 2 - ((nl - ul) / nl) ** 2
        gr = 1.0 - (ur / nr) ** 2 - ((nr - ur) / nr) ** 2
        imp = (nl * gl + nr * gr) / n
        pos = int(np.argmin(imp))  # first minimum = lowest threshold
        if best is None or imp[pos] < best[0]:
            best = (float(imp[pos]), j, float(0.5 * (xs[k[pos]] + xs[k[pos] + 1])))
    return best


def train_cart(samples, max_depth: int = 8, min_leaf: int = 5, seed: int = 0) -> CartTree:
    """Greedy Gini tree. ``seed`` is accepted for interface symmetry; the build is deterministic."""
    X, y = _as_xy(samples)
    tree = CartTree(max_depth=max_depth, min_leaf=min_leaf, n_features=X.shape[1])

    def grow(idx, depth):
        yy = y[idx]
        n_unstable = int(yy.sum())
        counts = (len(yy) - n_unstable, n_unstable)
        k = len(tree.nodes)
        tree.nodes.append(Node(counts))
        if depth >= max_depth or 0 in counts or len(idx) < 2 * min_leaf:
            return k
        split = best_split(X[idx], yy, min_leaf)
        if split is None or split[0] >= gini(counts) - 1e-12:
            return k
        _, j, thr = split
        go_left = X[idx, j] <= thr
        node = tree.nodes[k]
        node.feature, node.threshold = j, thr
        node.left = grow(idx[go_left], depth + 1)
        node.right = grow(idx[~go_left], depth + 1)
        return k

    grow(np.arange(len(y)), 0)
    return tree


def cart_scores(tree: CartTree, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != tree.n_features:
        raise ShapeError(f"sample has {X.shape[1]} features, tree expects {tree.n_features}")
    out = np.empty(len(X))
    for r, x in enumerate(X):
        node = tree.nodes[0]
        while not node.is_leaf:
            node = tree.nodes[node.left if x[node.feature] <= node.threshold else node.right]
        out[r] = node.counts[0] / (node.counts[0] + node.counts[1])
    return out


def predict_cart(tree: CartTree, sample) -> tuple[Label, float]:
    score = float(cart_scores(tree, _features(sample))[0])
    return _label_for(score), score


# ---------------------------------------------------------------------------
# linear SVM


@dataclass
class LinearSvm:
    weights: np.ndarray
    bias: float = 0.0
    lam: float = 1e-4
    epochs: int = 50
    seed: int = 0

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias, "lam": self.lam,
                "epochs": self.epochs, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearSvm":
        return cls(np.asarray(d["weights"], dtype=np.float64), float(d["bias"]),
                   float(d["lam"]), int(d["epochs"]), int(d["seed"]))


def svm_objective(model: LinearSvm, X, y) -> float:
    """Regularized hinge loss with labels Stable=+1, Unstable=-1."""
    s = np.where(np.asarray(y) == 0, 1.0, -1.0)
    margins = s * (np.asarray(X) @ model.weights + model.bias)
    w2 = float(model.weights @ model.weights + model.bias ** 2)
    return 0.5 * model.lam * w2 + float(np.mean(np.maximum(0.0, 1.0 - margins)))


def train_svm(samples, lam: float = 1e-4, epochs: int = 50, seed: int = 0) -> LinearSvm:
    """Primal subgradient descent with step ``1 / (lam * t)``.

    The bias is handled as an extra weight on a constant feature, so it is
    regularized along with the rest. Each epoch visits every sample once in
    a seeded random order.
    """
    X, y = _as_xy(samples)
    s = np.where(y == 0, 1.0, -1.0)
    n, p = X.shape
    w = np.zeros(p + 1)
    Xa = np.hstack([X, np.ones((n, 1))])
    rng = np.random.default_rng(seed)
    t = 0
    radius = 1.0 / np.sqrt(lam)
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = s[i] * (Xa[i] @ w)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * s[i] * Xa[i]
            norm = np.sqrt(w @ w)
            if norm > radius:
                w *= radius / norm
    return LinearSvm(w[:-1].copy(), float(w[-1]), lam, epochs, seed)


def svm_scores(model: LinearSvm, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.weights.shape[0]:
        raise ShapeError(f"sample has {X.shape[1]} features, model expects {model.weights.shape[0]}")
    margin = X @ model.weights + model.bias
    return 0.5 * (1.0 + np.tanh(0.5 * margin))


def predict_svm(model: LinearSvm, sample) -> tuple[Label, float]:
    score = float(svm_scores(model, _features(sample))[0])
    return _label_for(score), score
