"""Gradient-boosted regression trees with a softmax multiclass objective.

Every boosting round fits one tree per class to the first- and second-order
gradient statistics of the softmax cross-entropy. Splits are exact greedy:
each feature is sorted and every boundary between distinct values is scored
with the second-order gain

    gain = 1/2 * (GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda)) - gamma

and leaves take weight -G/(H+lambda). Ties break toward the lower feature
index, then the lower threshold, so training is fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateLabels, DimensionMismatch


@dataclass
class Tree:
    """Flat node arrays; feature -1 marks a leaf, children index into arrays."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        out = np.zeros(X.shape[0], dtype=np.float64)
        pending = np.arange(X.shape[0])
        while pending.size:
            feats = self.feature[node[pending]]
            leaves = feats < 0
            leaf_rows = pending[leaves]
            out[leaf_rows] = self.value[node[leaf_rows]]
            pending = pending[~leaves]
            if not pending.size:
                break
            cur = node[pending]
            go_left = X[pending, self.feature[cur]] < self.threshold[cur]
            node[pending] = np.where(go_left, self.left[cur], self.right[cur])
        return out


class _TreeBuilder:
    def __init__(self, X, grad, hess, max_depth, reg_lambda, gamma):
        self.X = X
        self.grad = grad
        self.hess = hess
        self.max_depth = max_depth
        self.reg_lambda = reg_lambda
        self.gamma = gamma
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        # leaf weight per training row, filled as leaves are created
        self.train_output = np.zeros(X.shape[0], dtype=np.float64)

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def _leaf_weight(self, g_sum: float, h_sum: float) -> float:
        return -g_sum / (h_sum + self.reg_lambda)

    def _best_split(self, rows: np.ndarray):
        """(feature, threshold, gain, left_rows, right_rows) or None."""
        g = self.grad[rows]
        h = self.hess[rows]
        g_sum, h_sum = g.sum(), h.sum()
        parent_score = g_sum * g_sum / (h_sum + self.reg_lambda)
        best = None
        for f in range(self.X.shape[1]):
            values = self.X[rows, f]
            order = np.argsort(values, kind="stable")
            v_sorted = values[order]
            boundaries = np.flatnonzero(v_sorted[:-1] < v_sorted[1:])
            if not boundaries.size:
                continue
            g_prefix = np.cumsum(g[order])
            h_prefix = np.cumsum(h[order])
            gl = g_prefix[boundaries]
            hl = h_prefix[boundaries]
            gr = g_sum - gl
            hr = h_sum - hl
            gains = 0.5 * (
                gl * gl / (hl + self.reg_lambda)
                + gr * gr / (hr + self.reg_lambda)
                - parent_score
            ) - self.gamma
            pick = int(gains.argmax())  # first max = lowest threshold
            if best is None or gains[pick] > best[2]:
                cut = boundaries[pick]
                thr = 0.5 * (v_sorted[cut] + v_sorted[cut + 1])
                left_rows = rows[order[: cut + 1]]
                right_rows = rows[order[cut + 1 :]]
                best = (f, float(thr), float(gains[pick]), left_rows, right_rows)
        return best

    def build(self) -> Tree:
        root = self._new_node()
        stack = [(root, np.arange(self.X.shape[0]), 0)]
        while stack:
            node, rows, depth = stack.pop()
            g_sum = float(self.grad[rows].sum())
            h_sum = float(self.hess[rows].sum())
            split = None
            if depth < self.max_depth and rows.size >= 2:
                split = self._best_split(rows)
            if split is None or split[2] <= 0.0:
                weight = self._leaf_weight(g_sum, h_sum)
                self.value[node] = weight
                self.train_output[rows] = weight
                continue
            f, thr, _, left_rows, right_rows = split
            self.feature[node] = f
            self.threshold[node] = thr
            left = self._new_node()
            right = self._new_node()
            self.left[node] = left
            self.right[node] = right
            stack.append((right, right_rows, depth + 1))
            stack.append((left, left_rows, depth + 1))
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value, dtype=np.float64),
        )


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _log_loss(scores: np.ndarray, y: np.ndarray) -> float:
    shifted = scores - scores.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-log_probs[np.arange(len(y)), y].mean())


@dataclass
class GbdtModel:
    n_classes: int
    rounds: tuple[tuple[Tree, ...], ...]  # rounds x classes
    learning_rate: float
    max_depth: int
    reg_lambda: float
    gamma: float
    base_score: float
    n_features: int
    seed: int = 0
    loss_history: tuple[float, ...] = field(default_factory=tuple)

    def raw_scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or (X.shape[0] and X.shape[1] != self.n_features):
            raise DimensionMismatch(f"expected (n, {self.n_features}), got {X.shape}")
        scores = np.full((X.shape[0], self.n_classes), self.base_score)
        for round_trees in self.rounds:
            for c, tree in enumerate(round_trees):
                scores[:, c] += self.learning_rate * tree.predict(X)
        return scores

    def predict_proba(self, X) -> np.ndarray:
        return _softmax(self.raw_scores(X))

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] == 0:
            return np.zeros(0, dtype=np.int64)
        return self.raw_scores(X).argmax(axis=1)


def gbdt_train(
    X,
    y,
    rounds: int = 100,
    learning_rate: float = 0.1,
    max_depth: int = 4,
    reg_lambda: float = 1.0,
    gamma: float = 0.0,
    seed: int = 0,
    n_classes: int | None = None,
) -> GbdtModel:
    """Boosted softmax classifier; `n_classes` overrides max(y)+1 when given."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X {X.shape} does not align with y {y.shape}")
    n = X.shape[0]
    if n < 2:
        raise DegenerateLabels("need at least two samples")
    k = int(n_classes) if n_classes is not None else int(y.max()) + 1
    if k < 2:
        raise DegenerateLabels("need at least two classes")
    if y.min() < 0 or y.max() >= k:
        raise DegenerateLabels(f"labels outside [0, {k})")

    scores = np.zeros((n, k), dtype=np.float64)
    loss_history = [_log_loss(scores, y)]
    all_rounds: list[tuple[Tree, ...]] = []
    onehot = np.zeros((n, k), dtype=np.float64)
    onehot[np.arange(n), y] = 1.0
    for _ in range(rounds):
        probs = _softmax(scores)
        grads = probs - onehot
        hesses = probs * (1.0 - probs)
        round_trees = []
        for c in range(k):
            builder = _TreeBuilder(
                X, grads[:, c], hesses[:, c], max_depth, reg_lambda, gamma
            )
            tree = builder.build()
            scores[:, c] += learning_rate * builder.train_output
            round_trees.append(tree)
        all_rounds.append(tuple(round_trees))
        loss_history.append(_log_loss(scores, y))
    return GbdtModel(
        n_classes=k,
        rounds=tuple(all_rounds),
        learning_rate=learning_rate,
        max_depth=max_depth,
        reg_lambda=reg_lambda,
        gamma=gamma,
        base_score=0.0,
        n_features=X.shape[1],
        seed=seed,
        loss_history=tuple(loss_history),
    )


def gbdt_predict(model: GbdtModel, X) -> np.ndarray:
    return model.predict(X)
