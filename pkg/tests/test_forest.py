import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from handwash.forest import (
    DUMMY_STRATEGIES,
    Forest,
    ForestError,
    ForestParams,
    Tree,
    best_split,
    bootstrap_indices,
    build_tree,
    dump_forest,
    gini_impurity,
    load_forest,
    predict,
    predict_dummy,
    train_dummy,
    train_forest,
)


def brute_split(X, y, feats, min_leaf=1):
    """Exhaustive (feature, threshold) enumeration in tie-rule order."""
    n = len(y)
    parent = gini_impurity(np.bincount(y, minlength=2)) if n else 0.0
    best = None
    for f in sorted(set(feats)):
        vals = sorted(set(X[:, f].tolist()))
        for a, b in zip(vals, vals[1:]):
            t = (a + b) / 2
            mask = X[:, f] <= t
            nl, nr = mask.sum(), (~mask).sum()
            if nl < min_leaf or nr < min_leaf:
                continue
            g = (nl * gini_impurity(np.bincount(y[mask], minlength=2))
                 + nr * gini_impurity(np.bincount(y[~mask], minlength=2))) / n
            if best is None or g < best[2] - 1e-12:
                best = (f, t, g)
    if best is None or best[2] >= parent - 1e-12:
        return None
    return best


def reference_tree(X, y, params):
    """Recursive grower over duplicated bootstrap rows with every feature as candidate."""
    nodes = []

    def grow(Xs, ys, depth):
        counts = np.bincount(ys, minlength=2)
        i = len(nodes)
        nodes.append(None)
        split = None
        depth_ok = params.max_depth is None or depth < params.max_depth
        if depth_ok and len(ys) >= params.min_samples_split and 0 < counts[1] < len(ys):
            split = best_split(Xs, ys, range(X.shape[1]), params.min_samples_leaf)
        if split is None:
            nodes[i] = ("L", int(counts[0]), int(counts[1]))
            return
        nodes[i] = ("S", split.feature, split.threshold, int(counts[0]), int(counts[1]))
        m = Xs[:, split.feature] <= split.threshold
        grow(Xs[m], ys[m], depth + 1)
        grow(Xs[~m], ys[~m], depth + 1)

    return nodes, grow


def tree_nodes(t: Tree):
    out = []
    for i in range(t.n_nodes):
        c0, c1 = (int(c) for c in t.counts[i])
        if t.feature[i] < 0:
            out.append(("L", c0, c1))
        else:
            out.append(("S", int(t.feature[i]), float(t.threshold[i]), c0, c1))
    return out


def noisy_problem(rng, n=300, d=6):
    X = rng.normal(size=(n, d))
    X[:, 2] = np.round(X[:, 2], 1)  # ties within a feature
    X[:, 4] = X[:, 1]  # duplicate feature
    y = ((X[:, 0] + 0.5 * X[:, 1] + rng.normal(0, 0.7, n)) > 0.8).astype(np.int64)
    return X, y


class TestGini:
    @pytest.mark.parametrize("counts,expected", [((10, 0), 0.0), ((5, 5), 0.5), ((3, 1), 0.375)])
    def test_examples(self, counts, expected):
        assert gini_impurity(counts) == pytest.approx(expected, abs=1e-15)

    def test_empty(self):
        with pytest.raises(ValueError):
            gini_impurity([0, 0])


class TestBestSplit:
    def test_single_feature(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        s = best_split(X, np.array([0, 0, 1, 1]), [0])
        assert (s.feature, s.threshold, s.impurity) == (0, 2.5, 0.0)

    def test_pure(self):
        assert best_split(np.eye(3), np.ones(3, dtype=int), [0, 1, 2]) is None

    def test_identical_features(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        s = best_split(np.c_[x, x], np.array([0, 0, 1, 1]), [1, 0])
        assert s.feature == 0

    def test_lower_threshold_on_tie(self):
        # splitting at 1.5 or 3.5 is equally good
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        s = best_split(X, np.array([1, 0, 0, 1]), [0])
        assert s is not None and s.threshold == 1.5

    @settings(max_examples=150, deadline=None)
    @given(
        st.integers(2, 25).flatmap(
            lambda n: st.tuples(
                st.lists(st.lists(st.integers(0, 4), min_size=3, max_size=3), min_size=n, max_size=n),
                st.lists(st.integers(0, 1), min_size=n, max_size=n),
                st.integers(1, 3),
            )
        )
    )
    def test_matches_exhaustive_enumeration(self, case):
        rows, labels, min_leaf = case
        X = np.array(rows, dtype=float)
        y = np.array(labels)
        got = best_split(X, y, [0, 1, 2], min_leaf)
        want = brute_split(X, y, [0, 1, 2], min_leaf)
        if want is None:
            assert got is None
        else:
            assert (got.feature, got.threshold) == want[:2]
            assert got.impurity == pytest.approx(want[2], abs=1e-12)


class TestTree:
    @pytest.mark.parametrize(
        "params",
        [
            ForestParams(max_features=6, seed=3),
            ForestParams(max_features=6, seed=4, max_depth=3),
            ForestParams(max_features=6, seed=5, min_samples_leaf=4, min_samples_split=10),
            ForestParams(max_features=6, seed=6, bootstrap_fraction=0.5),
        ],
    )
    def test_compiled_grower_matches_reference(self, params, rng):
        X, y = noisy_problem(rng)
        for i in range(3):
            t = build_tree(X, y, params, tree_index=i)
            rows = bootstrap_indices(len(y), params, i)
            nodes, grow = reference_tree(X, y, params)
            grow(X[rows], y[rows], 0)
            assert tree_nodes(t) == nodes

    def test_structure_invariants(self, rng):
        X, y = noisy_problem(rng)
        t = build_tree(X, y, ForestParams(seed=9), 0)
        for i in range(t.n_nodes):
            if t.feature[i] >= 0:
                l, r = t.left[i], t.right[i]
                assert l == i + 1 and r > l
                assert (t.counts[l] + t.counts[r] == t.counts[i]).all()
                assert t.counts[l].sum() > 0 and t.counts[r].sum() > 0
        assert t.counts[0].sum() == len(y)

    def test_training_rows_replay(self, rng):
        X, y = noisy_problem(rng, n=120)
        t = build_tree(X, y, ForestParams(seed=2, bootstrap_fraction=1.0), 0)
        rows = np.unique(bootstrap_indices(len(y), ForestParams(seed=2), 0))
        leaves = t.apply(X[rows])
        pure = (t.counts[leaves] == 0).any(axis=1)
        assert (t.predict(X[rows])[pure] == y[rows][pure]).all()


class TestForest:
    def test_separable_toy(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(-1, 1, size=(20, 2))
        y = (X[:, 0] + X[:, 1] > 0).astype(int)
        f = train_forest(X, y, ForestParams(n_trees=25, seed=1))
        assert (f.predict(X) == y).all()

    def test_deterministic_and_thread_independent(self, rng):
        X, y = noisy_problem(rng)
        probe = rng.normal(size=(200, X.shape[1]))
        p = ForestParams(n_trees=20, seed=11)
        a = train_forest(X, y, p)
        b = train_forest(X, y, p, n_jobs=4)
        assert dump_forest(a) == dump_forest(b)
        assert (a.predict(probe) == train_forest(X, y, p).predict(probe)).all()

    def test_single_tree(self, rng):
        X, y = noisy_problem(rng)
        f = train_forest(X, y, ForestParams(n_trees=1, seed=4))
        assert (f.predict(X) == f.trees[0].predict(X)).all()

    def test_vote_tie_goes_to_wash(self):
        leaf0 = Tree(np.array([-1]), np.zeros(1), np.array([-1]), np.array([-1]), np.array([[3, 0]]))
        leaf1 = Tree(np.array([-1]), np.zeros(1), np.array([-1]), np.array([-1]), np.array([[0, 3]]))
        f = Forest([leaf0, leaf1], ForestParams(n_trees=2), 1)
        assert f.predict(np.zeros((1, 1))).tolist() == [1]

    def test_leaf_tie_goes_to_wash(self):
        t = Tree(np.array([-1]), np.zeros(1), np.array([-1]), np.array([-1]), np.array([[2, 2]]))
        assert t.predict(np.zeros((1, 1))).tolist() == [1]

    def test_errors(self, rng):
        X, y = noisy_problem(rng)
        with pytest.raises(ForestError, match="degenerate training labels"):
            train_forest(X, np.zeros(len(y)))
        f = train_forest(X, y, ForestParams(n_trees=3))
        with pytest.raises(ForestError):
            predict(f, np.zeros((2, 3)))
        assert predict(f, np.zeros((0, X.shape[1]))).size == 0

    def test_model_file_roundtrip(self, rng):
        X, y = noisy_problem(rng)
        f = train_forest(X, y, ForestParams(n_trees=10, seed=8, max_depth=6))
        text = dump_forest(f)
        g = load_forest(text)
        probe = rng.normal(size=(500, X.shape[1]))
        assert (g.predict(probe) == f.predict(probe)).all()
        assert dump_forest(g) == text
        assert g.params == f.params

    def test_bad_model_file(self):
        with pytest.raises(ForestError):
            load_forest("handwash-forest 99\n")

    def test_params_config_roundtrip(self):
        p = ForestParams(n_trees=7, max_depth=None, max_features=3, bootstrap_fraction=0.5, seed=2)
        assert ForestParams.from_config(p.to_config()) == p
        assert ForestParams().features_per_split(108) == 10
        assert ForestParams(max_features=500).features_per_split(4) == 4


class TestDummies:
    def test_constant_strategies(self):
        y = np.array([0, 0, 0, 1])
        assert predict_dummy(train_dummy(y, "most_frequent"), 3).tolist() == [0, 0, 0]
        assert predict_dummy(train_dummy(y, "always_positive"), 3).tolist() == [1, 1, 1]
        assert predict_dummy(train_dummy([0, 1], "most_frequent"), 1).tolist() == [1]

    @pytest.mark.parametrize("strategy,rate", [("stratified", 0.2), ("uniform", 0.5)])
    def test_random_strategies(self, strategy, rate):
        y = np.array([1] * 20 + [0] * 80)
        m = train_dummy(y, strategy, seed=3)
        a = predict_dummy(m, 20000)
        assert (a == predict_dummy(m, 20000)).all()
        assert abs(a.mean() - rate) < 0.02

    def test_errors(self):
        with pytest.raises(ValueError):
            train_dummy([], "uniform")
        with pytest.raises(ValueError):
            train_dummy([1], "coin")
        assert set(DUMMY_STRATEGIES) == {"most_frequent", "stratified", "uniform", "always_positive"}


def test_bootstrap_stream_keyed_by_tree():
    p = ForestParams(seed=5)
    a = [bootstrap_indices(50, p, i) for i in range(3)]
    b = [bootstrap_indices(50, p, i) for i in reversed(range(3))][::-1]
    for x, z in zip(a, b):
        assert (x == z).all()
    assert not all((x == z).all() for x, z in itertools.combinations(a, 2))
