"""Random forest of axis-aligned Gini trees, plus input-ignoring dummy baselines.

Labels are binary ints: 1 = wash (positive), 0 = null. Every tie (leaf
majority, forest vote, most-frequent dummy) resolves to the positive class.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Mapping, Sequence

import numpy as np
from numba import njit

FORMAT_VERSION = 1
DUMMY_STRATEGIES = ("most_frequent", "stratified", "uniform", "always_positive")


class ForestError(ValueError):
    pass


def gini_impurity(class_counts: Sequence[float]) -> float:
    counts = np.asarray(class_counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ValueError("class counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("gini impurity of an empty node")
    p = counts / total
    return float(1.0 - np.sum(p * p))


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: int | None = None  # None: round(sqrt(d))
    bootstrap_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ForestError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ForestError("max_depth must be >= 0")
        if self.min_samples_split < 2:
            raise ForestError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ForestError("min_samples_leaf must be >= 1")
        if not self.bootstrap_fraction > 0:
            raise ForestError("bootstrap_fraction must be > 0")

    def features_per_split(self, d: int) -> int:
        k = self.max_features if self.max_features is not None else round(math.sqrt(d))
        return int(min(max(k, 1), d))

    def replace(self, **changes) -> "ForestParams":
        return ForestParams(**{**asdict(self), **changes})

    def to_config(self) -> dict[str, str]:
        return {f"forest.{k}": ("none" if v is None else str(v)) for k, v in asdict(self).items()}

    @classmethod
    def from_config(cls, values: Mapping[str, str], base: "ForestParams | None" = None) -> "ForestParams":
        kw = asdict(base or cls())
        types = {f.name: f.type for f in fields(cls)}
        for key, value in values.items():
            if not key.startswith("forest."):
                continue
            name = key[len("forest."):]
            if name not in types:
                raise ForestError(f"unknown key {key}")
            try:
                if value.lower() == "none" and name in ("max_depth", "max_features"):
                    kw[name] = None
                elif name == "bootstrap_fraction":
                    kw[name] = float(value)
                else:
                    kw[name] = int(value)
            except ValueError:
                raise ForestError(f"{key}: invalid value {value!r}") from None
        return cls(**kw)


@dataclass(frozen=True)
class SplitDecision:
    feature: int
    threshold: float
    impurity: float  # weighted child Gini


def _midpoint(a: float, b: float) -> float:
    t = 0.5 * (a + b)
    if not math.isfinite(t):
        t = 0.5 * a + 0.5 * b
    # adjacent floats: keep the split strictly separating a from b
    return a if t >= b else t


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    candidate_features: Sequence[int],
    min_samples_leaf: int = 1,
) -> SplitDecision | None:
    """Lowest weighted-Gini split ``x[f] <= t`` over the candidate features.

    Thresholds are midpoints between consecutive distinct values. Ties go to
    the lower feature index, then the lower threshold. Returns ``None`` when
    no admissible split lowers the impurity.
    """
    y = np.asarray(y)
    n = y.shape[0]
    n_pos = int(np.count_nonzero(y))
    if n < 2 or n_pos in (0, n):
        return None
    feats = np.unique(np.asarray(candidate_features, dtype=np.intp))
    Xc = np.asarray(X)[:, feats]
    order = np.argsort(Xc, axis=0, kind="stable")
    xs = np.take_along_axis(Xc, order, axis=0)
    lp = np.cumsum(y[order], axis=0, dtype=np.int64)[:-1]
    nl = np.arange(1, n, dtype=np.int64)[:, None]
    nr = n - nl
    rp = n_pos - lp
    # node size times its Gini is 2*pos*neg/size
    score = (2.0 * lp * (nl - lp)) / nl + (2.0 * rp * (nr - rp)) / nr
    valid = xs[1:] > xs[:-1]
    if min_samples_leaf > 1:
        valid &= (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
    score = np.where(valid, score, np.inf)
    flat = score.T.ravel()  # feature-major, so argmin honours the tie rule
    k = int(np.argmin(flat))
    best = flat[k]
    parent = 2.0 * n_pos * (n - n_pos) / n
    if not np.isfinite(best) or best >= parent * (1.0 - 1e-12):
        return None
    j, i = divmod(k, n - 1)
    return SplitDecision(int(feats[j]), _midpoint(float(xs[i, j]), float(xs[i + 1, j])), best / n)


@dataclass(eq=False)
class Tree:
    """Flat node arrays in preorder; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, 2) training class counts
    tree_index: int = 0
    seed: int = 0

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.intp)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def leaf_labels(self) -> np.ndarray:
        return (self.counts[:, 1] >= self.counts[:, 0]).astype(np.int8)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_labels()[self.apply(X)]


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, tree_index]))


def bootstrap_indices(n: int, params: ForestParams, tree_index: int) -> np.ndarray:
    """Bootstrap rows of tree ``tree_index``; a function of (seed, tree_index, n) only."""
    rng = tree_rng(params.seed, tree_index)
    size = max(1, round(params.bootstrap_fraction * n))
    return rng.integers(0, n, size=size)


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, nogil=True)
def _splitmix64(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def presort(XT):
    """Row order of every feature column; ``XT`` is feature-major (d, n)."""
    d, n = XT.shape
    out = np.empty((d, n), dtype=np.intp)
    for f in range(d):
        out[f] = np.argsort(XT[f])
    return out


@njit(cache=True, nogil=True)
def _grow(XT, y, order_all, weight, mtry, max_depth, min_split, min_leaf, state):
    # Rows carry bootstrap multiplicities; split scores use weighted counts and
    # match best_split() on the expanded sample, including its tie rule.
    d, n_all = XT.shape
    m = 0
    for r in range(n_all):
        if weight[r] > 0:
            m += 1
    order = np.empty((d, m), dtype=np.intp)
    for f in range(d):
        k = 0
        for r in order_all[f]:
            if weight[r] > 0:
                order[f, k] = r
                k += 1
    cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.intp)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.intp)
    right = np.full(cap, -1, dtype=np.intp)
    counts = np.zeros((cap, 2), dtype=np.int64)
    goes_left = np.zeros(n_all, dtype=np.bool_)
    buf = np.empty(m, dtype=np.intp)
    perm = np.arange(d)
    # stack entries: start, end, depth, parent, is_right
    stack = np.empty((cap, 5), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = m
    stack[0, 2] = 0
    stack[0, 3] = -1
    stack[0, 4] = 0
    top = 1
    n_nodes = 0
    while top > 0:
        top -= 1
        start = stack[top, 0]
        end = stack[top, 1]
        depth = stack[top, 2]
        parent = stack[top, 3]
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if stack[top, 4]:
                right[parent] = node
            else:
                left[parent] = node
        size = 0
        pos = 0
        for i in range(start, end):
            r = order[0, i]
            size += weight[r]
            pos += weight[r] * y[r]
        counts[node, 0] = size - pos
        counts[node, 1] = pos
        if pos == 0 or pos == size or size < min_split or size < 2 * min_leaf:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue
        for j in range(mtry):
            k = j + np.intp(_splitmix64(state) % np.uint64(d - j))
            tmp = perm[j]
            perm[j] = perm[k]
            perm[k] = tmp
        cand = np.sort(perm[:mtry])

        best = np.inf
        best_f = -1
        best_t = 0.0
        for f in cand:
            lw = 0
            lp = 0
            for i in range(start, end - 1):
                r = order[f, i]
                lw += weight[r]
                lp += weight[r] * y[r]
                a = XT[f, r]
                b = XT[f, order[f, i + 1]]
                if not b > a:
                    continue
                nr = size - lw
                if lw < min_leaf or nr < min_leaf:
                    continue
                rp = pos - lp
                score = (2.0 * lp * (lw - lp)) / lw + (2.0 * rp * (nr - rp)) / nr
                if score < best:
                    best = score
                    best_f = f
                    t = 0.5 * (a + b)
                    if not np.isfinite(t):
                        t = 0.5 * a + 0.5 * b
                    best_t = a if t >= b else t
        parent_score = 2.0 * pos * (size - pos) / size
        if best_f < 0 or not best < parent_score * (1.0 - 1e-12):
            continue
        feature[node] = best_f
        threshold[node] = best_t

        n_left = 0
        for i in range(start, end):
            r = order[0, i]
            goes_left[r] = XT[best_f, r] <= best_t
            if goes_left[r]:
                n_left += 1
        for g in range(d):
            a_i = start
            b_i = 0
            for i in range(start, end):
                r = order[g, i]
                if goes_left[r]:
                    order[g, a_i] = r
                    a_i += 1
                else:
                    buf[b_i] = r
                    b_i += 1
            for i in range(b_i):
                order[g, a_i + i] = buf[i]
        mid = start + n_left
        stack[top, 0] = mid
        stack[top, 1] = end
        stack[top, 2] = depth + 1
        stack[top, 3] = node
        stack[top, 4] = 1
        stack[top + 1, 0] = start
        stack[top + 1, 1] = mid
        stack[top + 1, 2] = depth + 1
        stack[top + 1, 3] = node
        stack[top + 1, 4] = 0
        top += 2
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        counts[:n_nodes].copy(),
    )


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams,
    tree_index: int = 0,
    order: np.ndarray | None = None,
) -> Tree:
    """Grow one tree on the bootstrap sample of ``tree_index``.

    Candidate features per node come from a splitmix64 stream whose state is
    also keyed by (seed, tree_index). ``order`` is ``presort(X.T)``, reusable
    across the trees of a forest.
    """
    XT = np.ascontiguousarray(np.asarray(X, dtype=np.float64).T)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if order is None:
        order = presort(XT)
    rows = bootstrap_indices(XT.shape[1], params, tree_index)
    weight = np.bincount(rows, minlength=XT.shape[1]).astype(np.int64)
    state = np.random.SeedSequence([params.seed, tree_index, 1]).generate_state(1, dtype=np.uint64)
    feature, threshold, left, right, counts = _grow(
        XT,
        y,
        order,
        weight,
        params.features_per_split(XT.shape[0]),
        -1 if params.max_depth is None else params.max_depth,
        params.min_samples_split,
        params.min_samples_leaf,
        state,
    )
    return Tree(feature, threshold, left, right, counts, tree_index, params.seed)


@dataclass(eq=False)
class Forest:
    trees: list[Tree]
    params: ForestParams
    n_features: int

    def votes(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ForestError(
                f"expected rows with {self.n_features} features, got shape {X.shape}"
            )
        v = np.zeros(X.shape[0], dtype=np.int64)
        for t in self.trees:
            v += t.predict(X)
        return v

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2 and X.shape[0] == 0 and X.shape[1] in (0, self.n_features):
            return np.zeros(0, dtype=np.int8)
        return (2 * self.votes(X) >= len(self.trees)).astype(np.int8)


def train_forest(X, y, params: ForestParams | None = None, n_jobs: int = 1) -> Forest:
    """Fit ``params.n_trees`` trees; the result does not depend on ``n_jobs``."""
    params = params or ForestParams()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ForestError("X must be 2-d with one row per label")
    if X.shape[0] < 2 or np.unique(y).size < 2:
        raise ForestError("degenerate training labels")
    if X.shape[1] < 1:
        raise ForestError("no features")

    order = presort(np.ascontiguousarray(X.T))

    def grow(i: int) -> Tree:
        return build_tree(X, y, params, i, order)

    if n_jobs == 1 or params.n_trees == 1:
        trees = [grow(i) for i in range(params.n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs if n_jobs > 0 else None) as pool:
            trees = list(pool.map(grow, range(params.n_trees)))
    return Forest(trees, params, X.shape[1])


def predict(forest: Forest, rows) -> np.ndarray:
    return forest.predict(rows)


# ---------------------------------------------------------------------------
# model files


def dump_forest(forest: Forest) -> str:
    """Versioned text model: per tree, nodes in preorder with full-precision thresholds."""
    out = [f"handwash-forest {FORMAT_VERSION}", f"n_features {forest.n_features}"]
    out += [f"param {k} {v}" for k, v in forest.params.to_config().items()]
    for t in forest.trees:
        out.append(f"tree {t.tree_index} {t.n_nodes}")
        for i in range(t.n_nodes):
            c0, c1 = t.counts[i]
            if t.feature[i] < 0:
                out.append(f"L {c0} {c1}")
            else:
                out.append(f"S {t.feature[i]} {float(t.threshold[i])!r} {c0} {c1}")
    return "\n".join(out) + "\n"


def load_forest(text: str) -> Forest:
    lines = text.splitlines()
    if not lines or lines[0].split() != ["handwash-forest", str(FORMAT_VERSION)]:
        raise ForestError("not a handwash forest model (or unsupported version)")
    n_features = int(lines[1].split()[1])
    cfg = {}
    pos = 2
    while pos < len(lines) and lines[pos].startswith("param "):
        _, key, value = lines[pos].split(" ", 2)
        cfg[key] = value
        pos += 1
    params = ForestParams.from_config(cfg)
    trees = []
    while pos < len(lines):
        head = lines[pos].split()
        if head[0] != "tree":
            raise ForestError(f"line {pos + 1}: expected tree header")
        index, n_nodes = int(head[1]), int(head[2])
        body = [ln.split() for ln in lines[pos + 1 : pos + 1 + n_nodes]]
        pos += 1 + n_nodes
        trees.append(_tree_from_preorder(body, index, params.seed))
    return Forest(trees, params, n_features)


def _tree_from_preorder(body: list[list[str]], index: int, seed: int) -> Tree:
    n = len(body)
    feature = np.full(n, -1, dtype=np.intp)
    threshold = np.zeros(n)
    left = np.full(n, -1, dtype=np.intp)
    right = np.full(n, -1, dtype=np.intp)
    counts = np.zeros((n, 2), dtype=np.int64)
    pending: list[int] = []  # split nodes still waiting for a right child
    for i, tok in enumerate(body):
        if i > 0:
            prev = i - 1
            if feature[prev] >= 0 and left[prev] < 0:
                left[prev] = i
            else:
                right[pending.pop()] = i
        if tok[0] == "S":
            feature[i] = int(tok[1])
            threshold[i] = float(tok[2])
            counts[i] = int(tok[3]), int(tok[4])
            pending.append(i)
        else:
            counts[i] = int(tok[1]), int(tok[2])
    return Tree(feature, threshold, left, right, counts, index, seed)


# ---------------------------------------------------------------------------
# dummy baselines


@dataclass(frozen=True)
class DummyModel:
    strategy: str
    positive_rate: float
    majority: int
    seed: int = 0


def train_dummy(y, strategy: str, seed: int = 0) -> DummyModel:
    if strategy not in DUMMY_STRATEGIES:
        raise ValueError(f"unknown dummy strategy {strategy!r}")
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("dummy classifier needs at least one label")
    rate = float(np.count_nonzero(y)) / y.size
    return DummyModel(strategy, rate, 1 if rate >= 0.5 else 0, seed)


def predict_dummy(model: DummyModel, n: int) -> np.ndarray:
    if model.strategy == "most_frequent":
        return np.full(n, model.majority, dtype=np.int8)
    if model.strategy == "always_positive":
        return np.ones(n, dtype=np.int8)
    rng = np.random.default_rng(model.seed)
    p = model.positive_rate if model.strategy == "stratified" else 0.5
    return (rng.random(n) < p).astype(np.int8)
