"""Random forest classifier built from first principles.

Trees are grown on bootstrap samples with exact greedy Gini splits over a
random feature subset per node (midpoint thresholds between consecutive
sorted values). Growth stops at pure nodes or when no candidate split
decreases impurity. Tree structure lives in flat arrays so growth and
prediction can run through numba kernels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit, prange

from .errors import ModelFormatError, NonFiniteFeature, ShapeError, SingleClassTraining

MODEL_FORMAT = "earsleep-forest"
MODEL_VERSION = 1

N_TREES = 100
MIN_SAMPLES_LEAF = 1


@njit(cache=True, inline="always")
def _rng_next(state: np.uint64) -> np.uint64:
    # xorshift64*: small, fast, platform-stable
    state ^= state >> np.uint64(12)
    state ^= state << np.uint64(25)
    state ^= state >> np.uint64(27)
    return state * np.uint64(0x2545F4914F6CDD1D)


@njit(cache=True)
def _grow_tree(XT, y, sample_idx, seed, n_classes, mtry, min_leaf,
               feat, thr, left, right, counts):
    """Grow one tree into the preallocated flat arrays; returns node count.

    XT is the transposed feature matrix (features x samples) so candidate
    evaluation reads one contiguous column at a time.
    """
    n = sample_idx.shape[0]
    d = XT.shape[0]
    idx = sample_idx.copy()
    state = np.uint64(seed) | np.uint64(1)
    perm = np.arange(d, dtype=np.int64)
    vals = np.empty(n, dtype=np.float64)
    labs = np.empty(n, dtype=np.int64)
    lc = np.empty(n_classes, dtype=np.int64)
    stack = np.empty((2 * n + 1, 3), dtype=np.int64)
    stack[0, 0], stack[0, 1], stack[0, 2] = 0, 0, n
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node, start, end = stack[top, 0], stack[top, 1], stack[top, 2]
        m = end - start
        cnt = counts[node]
        for k in range(n_classes):
            cnt[k] = 0
        for i in range(start, end):
            cnt[y[idx[i]]] += 1
        present = 0
        for k in range(n_classes):
            if cnt[k] > 0:
                present += 1
        if present <= 1 or m < 2 * min_leaf:
            continue
        sq_parent = 0.0
        for k in range(n_classes):
            sq_parent += float(cnt[k]) * float(cnt[k])
        sq_parent /= m
        # accept only strictly positive impurity decrease
        best_gain = 1e-9 * m
        best_f = -1
        best_thr = 0.0
        # random feature subset: partial Fisher-Yates over a persistent permutation
        for j in range(mtry):
            state = _rng_next(state)
            r = j + np.int64(state % np.uint64(d - j))
            perm[j], perm[r] = perm[r], perm[j]
        for i in range(m):
            labs[i] = y[idx[start + i]]
        for ci in range(mtry):
            f = perm[ci]
            col = XT[f]
            for i in range(m):
                vals[i] = col[idx[start + i]]
            order = np.argsort(vals[:m])
            for k in range(n_classes):
                lc[k] = 0
            sql = 0.0
            for i in range(m - 1):
                lab = labs[order[i]]
                sql += 2.0 * lc[lab] + 1.0
                lc[lab] += 1
                v0 = vals[order[i]]
                v1 = vals[order[i + 1]]
                if v1 <= v0:
                    continue
                nl = i + 1
                nr = m - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                sqr = 0.0
                for k in range(n_classes):
                    dk = float(cnt[k] - lc[k])
                    sqr += dk * dk
                gain = sql / nl + sqr / nr - sq_parent
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    mid = v0 + 0.5 * (v1 - v0)
                    best_thr = mid if mid < v1 else v0  # guard fp overshoot
        if best_f < 0:
            continue  # no impurity decrease among candidates: impure leaf
        col = XT[best_f]
        lo = start
        hi = end - 1
        while lo <= hi:
            if col[idx[lo]] <= best_thr:
                lo += 1
            else:
                idx[lo], idx[hi] = idx[hi], idx[lo]
                hi -= 1
        feat[node] = best_f
        thr[node] = best_thr
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        stack[top, 0], stack[top, 1], stack[top, 2] = lid, start, lo
        top += 1
        stack[top, 0], stack[top, 1], stack[top, 2] = rid, lo, end
        top += 1
    return n_nodes


@njit(cache=True, parallel=True)
def _grow_forest(XT, y, boot, seeds, n_classes, mtry, min_leaf):
    n_trees, n = boot.shape
    max_nodes = 2 * n + 1
    feat = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    thr = np.zeros((n_trees, max_nodes), dtype=np.float64)
    left = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    right = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    counts = np.zeros((n_trees, max_nodes, n_classes), dtype=np.int64)
    n_nodes = np.zeros(n_trees, dtype=np.int64)
    for t in prange(n_trees):
        n_nodes[t] = _grow_tree(XT, y, boot[t], seeds[t], n_classes, mtry, min_leaf,
                                feat[t], thr[t], left[t], right[t], counts[t])
    return feat, thr, left, right, counts, n_nodes


@njit(cache=True, parallel=True)
def _vote(Xq, feat, thr, left, right, leaf_cls, offsets, n_classes):
    nq = Xq.shape[0]
    n_trees = offsets.shape[0] - 1
    votes = np.zeros((nq, n_classes), dtype=np.int64)
    for q in prange(nq):
        for t in range(n_trees):
            node = offsets[t]
            while feat[node] >= 0:
                if Xq[q, feat[node]] <= thr[node]:
                    node = left[node]
                else:
                    node = right[node]
            votes[q, leaf_cls[node]] += 1
    return votes


@dataclass
class Tree:
    feature: np.ndarray    # (nodes,) int32, -1 for leaves
    threshold: np.ndarray  # (nodes,) float64
    left: np.ndarray       # (nodes,) int32
    right: np.ndarray      # (nodes,) int32
    counts: np.ndarray     # (nodes, n_classes) int64


@dataclass
class ForestModel:
    trees: list[Tree]
    class_order: tuple[str, ...]
    feature_names: tuple[str, ...]
    n_features: int
    max_features: int
    seed: int
    windowed: bool = False
    _flat: dict | None = field(default=None, repr=False, compare=False)

    @property
    def n_classes(self) -> int:
        return len(self.class_order)

    def _flatten(self) -> dict:
        # concatenated node arrays with global child indices, for the numba router
        if self._flat is None:
            sizes = [len(t.feature) for t in self.trees]
            offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
            feat = np.concatenate([t.feature for t in self.trees])
            thr = np.concatenate([t.threshold for t in self.trees])
            left = np.concatenate([t.left + o for t, o in zip(self.trees, offsets)])
            right = np.concatenate([t.right + o for t, o in zip(self.trees, offsets)])
            counts = np.concatenate([t.counts for t in self.trees])
            leaf_cls = counts.argmax(axis=1).astype(np.int64)
            self._flat = dict(feat=feat.astype(np.int32), thr=thr, left=left.astype(np.int64),
                              right=right.astype(np.int64), leaf_cls=leaf_cls, offsets=offsets)
        return self._flat

    def predict(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Majority vote over trees.

        Returns (class indices, per-class vote fractions). Overall ties break
        toward the earlier class in class_order.
        """
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        if X.shape[1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} features, got {X.shape[1]}")
        f = self._flatten()
        votes = _vote(X, f["feat"], f["thr"], f["left"], f["right"],
                      f["leaf_cls"], f["offsets"], self.n_classes)
        fractions = votes / votes.sum(axis=1, keepdims=True)
        return votes.argmax(axis=1), fractions

    def predict_labels(self, X: np.ndarray) -> np.ndarray:
        pred, _ = self.predict(X)
        return np.array([self.class_order[i] for i in pred])

    def feature_importances(self) -> np.ndarray:
        """Mean decrease in impurity, averaged over trees, normalized to sum 1.

        Degenerate forests (no splits anywhere) return all zeros.
        """
        total = np.zeros(self.n_features)
        for tree in self.trees:
            imp = np.zeros(self.n_features)
            internal = np.flatnonzero(tree.feature >= 0)
            if internal.size == 0:
                continue
            node_n = tree.counts.sum(axis=1).astype(np.float64)
            n_root = node_n[0]
            with np.errstate(invalid="ignore", divide="ignore"):
                gini = 1.0 - ((tree.counts / node_n[:, None]) ** 2).sum(axis=1)
            for i in internal:
                l, r = tree.left[i], tree.right[i]
                decrease = (node_n[i] * gini[i] - node_n[l] * gini[l]
                            - node_n[r] * gini[r]) / n_root
                imp[tree.feature[i]] += decrease
            total += imp
        total /= len(self.trees)
        s = total.sum()
        return total / s if s > 0 else total


def train(X: np.ndarray, y: np.ndarray, class_order: tuple[str, ...],
          feature_names: tuple[str, ...] | None = None, n_trees: int = N_TREES,
          max_features: int | None = None, min_samples_leaf: int = MIN_SAMPLES_LEAF,
          seed: int = 0, windowed: bool = False) -> ForestModel:
    """Fit the ensemble: each tree sees n bootstrap draws (with replacement).

    Deterministic for fixed (data, seed): bootstrap indices and per-tree
    feature-subset seeds are pinned by one master generator up front.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ShapeError("X must be (n_samples, n_features) matching y")
    if not np.isfinite(X).all():
        raise NonFiniteFeature("training features contain NaN or Inf")
    if np.unique(y).size < 2:
        raise SingleClassTraining("need at least two classes in y")
    n, d = X.shape
    if max_features is None:
        max_features = int(np.ceil(np.sqrt(d)))
    max_features = min(max_features, d)
    rng = np.random.default_rng(seed)
    boot = rng.integers(0, n, size=(n_trees, n), dtype=np.int64)
    seeds = rng.integers(1, 2 ** 63, size=n_trees, dtype=np.int64).astype(np.uint64)
    feat, thr, left, right, counts, n_nodes = _grow_forest(
        np.ascontiguousarray(X.T), y, boot, seeds, len(class_order),
        max_features, min_samples_leaf)
    trees = [Tree(feature=feat[t, :n_nodes[t]].copy(), threshold=thr[t, :n_nodes[t]].copy(),
                  left=left[t, :n_nodes[t]].copy(), right=right[t, :n_nodes[t]].copy(),
                  counts=counts[t, :n_nodes[t]].copy())
             for t in range(n_trees)]
    names = tuple(feature_names) if feature_names else tuple(f"f{i}" for i in range(d))
    return ForestModel(trees=trees, class_order=tuple(class_order), feature_names=names,
                       n_features=d, max_features=max_features, seed=seed, windowed=windowed)


def grow_single_tree(X: np.ndarray, y: np.ndarray, sample_idx: np.ndarray,
                     feature_seed: int, n_classes: int, max_features: int,
                     min_samples_leaf: int = 1) -> Tree:
    """Grow one tree on explicit bootstrap indices (used by property tests)."""
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    sample_idx = np.asarray(sample_idx, dtype=np.int64)
    n = sample_idx.shape[0]
    max_nodes = 2 * n + 1
    feat = np.full(max_nodes, -1, dtype=np.int32)
    thr = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    counts = np.zeros((max_nodes, n_classes), dtype=np.int64)
    n_nodes = _grow_tree(np.ascontiguousarray(X.T), y, sample_idx, np.uint64(feature_seed),
                         n_classes, max_features, min_samples_leaf,
                         feat, thr, left, right, counts)
    return Tree(feature=feat[:n_nodes], threshold=thr[:n_nodes], left=left[:n_nodes],
                right=right[:n_nodes], counts=counts[:n_nodes])


def save(model: ForestModel, path: Path | str) -> None:
    """Write the versioned, self-describing model document."""
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "class_order": list(model.class_order),
        "feature_names": list(model.feature_names),
        "n_features": model.n_features,
        "max_features": model.max_features,
        "seed": model.seed,
        "windowed": model.windowed,
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "counts": t.counts.tolist(),
            }
            for t in model.trees
        ],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load(path: Path | str) -> ForestModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable model document: {exc}")
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a forest model document")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version: {doc.get('version')!r}")
    try:
        trees = [Tree(feature=np.asarray(t["feature"], dtype=np.int32),
                      threshold=np.asarray(t["threshold"], dtype=np.float64),
                      left=np.asarray(t["left"], dtype=np.int32),
                      right=np.asarray(t["right"], dtype=np.int32),
                      counts=np.asarray(t["counts"], dtype=np.int64))
                 for t in doc["trees"]]
        model = ForestModel(trees=trees, class_order=tuple(doc["class_order"]),
                            feature_names=tuple(doc["feature_names"]),
                            n_features=int(doc["n_features"]),
                            max_features=int(doc["max_features"]),
                            seed=int(doc["seed"]), windowed=bool(doc["windowed"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}")
    if not model.trees:
        raise ModelFormatError("model document contains an empty forest")
    for t in model.trees:
        if len(t.feature) == 0 or t.counts[0].sum() == 0:
            raise ModelFormatError("model document contains an empty tree")
    return model
