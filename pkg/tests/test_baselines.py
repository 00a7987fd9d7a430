import itertools

import numpy as np
import pytest

from stvslab import baselines
from stvslab.baselines import CartTree, FlatSample
from stvslab.core import Label
from stvslab.errors import MissingLabelError, ShapeError

from conftest import make_instance


def brute_best_split(X, y, min_leaf):
    """Try every feature and every midpoint; lowest feature then threshold wins ties."""
    best = (np.inf, -1, 0.0)
    n = len(y)
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for lo, hi in zip(vals[:-1], vals[1:]):
            t = 0.5 * (lo + hi)
            left = X[:, f] <= t
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            imp = sum(part.sum() / n * baselines.gini(np.bincount(y[part], minlength=2))
                      for part in (left, ~left))
            if imp < best[0] - 1e-15:
                best = (imp, f, t)
    return best


def test_gini():
    assert baselines.gini([5, 5]) == 0.5
    assert baselines.gini([4, 0]) == 0.0
    assert baselines.gini([0, 0]) == 0.0


@pytest.mark.parametrize("seed", range(20))
def test_best_split_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 5, size=(25, 3)).astype(float)
    y = rng.integers(0, 2, size=25)
    imp, f, t = baselines.best_split(X, y, 2)
    b_imp, b_f, b_t = brute_best_split(X, y, 2)
    assert f == b_f
    if f >= 0:
        assert t == b_t and imp == pytest.approx(b_imp, abs=1e-12)


def test_balanced_xor_has_no_improving_split():
    X = np.array(list(itertools.product([0.0, 1.0], repeat=2)) * 5)
    y = (X[:, 0] != X[:, 1]).astype(int)
    tree = baselines.train_cart((X, y), max_depth=3, min_leaf=1)
    assert len(tree.nodes) == 1


def test_unbalanced_xor_fits_perfectly():
    X = np.array(list(itertools.product([0.0, 1.0], repeat=2)) * 5 + [[0.0, 0.0]] * 3)
    y = (X[:, 0] != X[:, 1]).astype(int)
    tree = baselines.train_cart((X, y), max_depth=3, min_leaf=1)
    np.testing.assert_array_equal(baselines.cart_scores(tree, X) > 0.5, y == 0)


def test_tree_respects_depth_and_leaf_size():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((200, 4))
    y = rng.integers(0, 2, 200)
    tree = baselines.train_cart((X, y), max_depth=3, min_leaf=10)
    assert tree.depth() <= 3
    assert all(sum(n.counts) >= 10 for n in tree.nodes if n.is_leaf)
    back = CartTree.from_dict(tree.to_dict())
    np.testing.assert_array_equal(baselines.cart_scores(back, X), baselines.cart_scores(tree, X))


def test_pure_node_stops():
    X = np.arange(10.0)[:, None]
    tree = baselines.train_cart((X, np.zeros(10, int)), min_leaf=1)
    assert len(tree.nodes) == 1 and baselines.cart_scores(tree, X).tolist() == [1.0] * 10


def test_svm_separates_linear_data():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((300, 5))
    y = (X @ np.array([1.0, -2.0, 0.5, 0.0, 1.0]) + 0.3 < 0).astype(int)
    svm = baselines.train_svm((X, y), lam=1e-3, epochs=30)
    acc = np.mean((baselines.svm_scores(svm, X) > 0.5) == (y == 0))
    assert acc >= 0.95
    assert np.sqrt(svm.weights @ svm.weights + svm.bias ** 2) <= 1 / np.sqrt(1e-3) + 1e-9


def test_svm_objective_decreases_with_training():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((100, 3))
    y = (X[:, 0] > 0).astype(int)
    short = baselines.train_svm((X, y), lam=1e-2, epochs=1)
    long = baselines.train_svm((X, y), lam=1e-2, epochs=40)
    assert baselines.svm_objective(long, X, y) <= baselines.svm_objective(short, X, y) + 1e-9


def test_svm_deterministic():
    X = np.random.default_rng(3).standard_normal((50, 4))
    y = (X[:, 1] > 0).astype(int)
    a = baselines.train_svm((X, y), seed=4)
    b = baselines.train_svm((X, y), seed=4)
    assert a.weights.tobytes() == b.weights.tobytes()


def test_flatten_is_time_major():
    s = np.arange(12.0).reshape(2, 6)
    fs = baselines.flatten(make_instance(0, s, Label.STABLE), 2)
    np.testing.assert_array_equal(fs.features, np.arange(12.0))
    with pytest.raises(MissingLabelError):
        baselines.flatten(make_instance(0, s), 1)


def test_flat_sample_interface_and_shape_check():
    samples = [FlatSample(np.array([0.0, 1.0]), Label.STABLE),
               FlatSample(np.array([5.0, 1.0]), Label.UNSTABLE)] * 3
    tree = baselines.train_cart(samples, min_leaf=1)
    assert baselines.predict_cart(tree, samples[0])[0] is Label.STABLE
    svm = baselines.train_svm(samples, epochs=5)
    with pytest.raises(ShapeError):
        baselines.svm_scores(svm, np.zeros(3))
