"""Five-layer perceptron: dense+ReLU, dropout, dense+sigmoid, dropout, dense output.

Two output presets exist. "softmax" (the default) ends in a softmax with
cross-entropy loss and predicts the argmax. "relu_regression" ends in a
single ReLU unit regressing the integer class label under squared error,
predicting the nearest integer clamped into range.

Training is plain mini-batch SGD with seeded shuffling and inverted dropout
(activations are rescaled while training, so inference runs unmodified).
ReLU layers get He-normal initial weights, the sigmoid and output layers
Xavier-normal. All math is float64, which keeps finite-difference gradient
checks meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ArchMismatch, DimensionMismatch, NumericalFailure

OUTPUT_MODES = ("softmax", "relu_regression")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class MlpModel:
    layer_sizes: tuple[int, ...]  # (D, h1, h2, out)
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout: tuple[float, float]
    output_mode: str
    n_classes: int
    train_config: dict = field(default_factory=dict)

    def predict_scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or (X.shape[0] and X.shape[1] != self.layer_sizes[0]):
            raise DimensionMismatch(
                f"expected (n, {self.layer_sizes[0]}) inputs, got {X.shape}"
            )
        h1 = np.maximum(X @ self.weights[0] + self.biases[0], 0.0)
        h2 = _sigmoid(h1 @ self.weights[1] + self.biases[1])
        out = h2 @ self.weights[2] + self.biases[2]
        if self.output_mode == "relu_regression":
            out = np.maximum(out, 0.0)
        return out

    def predict_proba(self, X) -> np.ndarray:
        if self.output_mode != "softmax":
            raise ArchMismatch("probabilities exist only for the softmax preset")
        return _softmax(self.predict_scores(X))

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] == 0:
            return np.zeros(0, dtype=np.int64)
        scores = self.predict_scores(X)
        if self.output_mode == "softmax":
            return scores.argmax(axis=1)
        nearest = np.floor(scores[:, 0] + 0.5).astype(np.int64)
        return np.clip(nearest, 0, self.n_classes - 1)


def _init_params(arch, output_mode, rng):
    weights, biases = [], []
    fans = list(zip(arch[:-1], arch[1:]))
    for li, (fan_in, fan_out) in enumerate(fans):
        if li == 0:  # feeds the ReLU layer
            std = np.sqrt(2.0 / fan_in)
        else:  # feeds sigmoid / output
            std = np.sqrt(2.0 / (fan_in + fan_out))
        weights.append(rng.standard_normal((fan_in, fan_out)) * std)
        biases.append(np.zeros(fan_out))
    return weights, biases


def loss_and_grads(model: MlpModel, X, y, dropout_masks=None):
    """Mean loss on the batch plus gradients for every weight and bias.

    dropout_masks, when given, are the two pre-scaled keep masks; None
    disables dropout (the inference path).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    w0, w1, w2 = model.weights
    b0, b1, b2 = model.biases

    z1 = X @ w0 + b0
    a1 = np.maximum(z1, 0.0)
    if dropout_masks is not None:
        a1 = a1 * dropout_masks[0]
    z2 = a1 @ w1 + b1
    a2 = _sigmoid(z2)
    if dropout_masks is not None:
        a2 = a2 * dropout_masks[1]
    z3 = a2 @ w2 + b2

    if model.output_mode == "softmax":
        probs = _softmax(z3)
        eps = 1e-300
        loss = float(-np.log(probs[np.arange(n), y] + eps).mean())
        dz3 = probs.copy()
        dz3[np.arange(n), y] -= 1.0
        dz3 /= n
    else:
        out = np.maximum(z3, 0.0)
        target = y.astype(np.float64)[:, None]
        diff = out - target
        loss = float((diff**2).mean())
        dz3 = 2.0 * diff * (z3 > 0.0) / n

    gw2 = a2.T @ dz3
    gb2 = dz3.sum(axis=0)
    da2 = dz3 @ w2.T
    if dropout_masks is not None:
        da2 = da2 * dropout_masks[1]
    s2 = a2 if dropout_masks is None else _sigmoid(z2)  # pre-mask activation
    dz2 = da2 * s2 * (1.0 - s2)
    gw1 = a1.T @ dz2
    gb1 = dz2.sum(axis=0)
    da1 = dz2 @ w1.T
    if dropout_masks is not None:
        da1 = da1 * dropout_masks[0]
    dz1 = da1 * (z1 > 0.0)
    gw0 = X.T @ dz1
    gb0 = dz1.sum(axis=0)
    return loss, [gw0, gw1, gw2], [gb0, gb1, gb2]


def mlp_train(
    X,
    y,
    arch=None,
    dropout=(0.5, 0.5),
    epochs: int = 100,
    batch: int = 32,
    lr: float = 0.1,
    seed: int = 0,
    output_mode: str = "softmax",
    n_classes: int | None = None,
) -> MlpModel:
    """Train from scratch; `arch=None` defaults to [D, 512, 128, K]."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ArchMismatch(f"X {X.shape} does not align with y {y.shape}")
    if X.shape[0] < 1:
        raise ArchMismatch("need at least one sample")
    if output_mode not in OUTPUT_MODES:
        raise ArchMismatch(f"unknown output mode {output_mode!r}")
    if n_classes is not None:
        k = int(n_classes)
    elif output_mode == "softmax" and arch is not None:
        k = int(arch[-1])
    else:
        k = int(y.max()) + 1
    if y.size and (y.min() < 0 or y.max() >= k):
        raise ArchMismatch(f"labels outside [0, {k})")
    d = X.shape[1]
    out_dim = k if output_mode == "softmax" else 1
    if arch is None:
        arch = (d, 512, 128, out_dim)
    arch = tuple(int(a) for a in arch)
    if len(arch) != 4:
        raise ArchMismatch("architecture must be (input, hidden1, hidden2, output)")
    if arch[0] != d:
        raise ArchMismatch(f"architecture input {arch[0]} != feature dim {d}")
    if arch[-1] != out_dim:
        raise ArchMismatch(f"architecture output {arch[-1]} != expected {out_dim}")
    if not all(0.0 <= p < 1.0 for p in dropout) or len(dropout) != 2:
        raise ArchMismatch("dropout rates must be two values in [0, 1)")

    rng = np.random.Generator(np.random.PCG64(seed))
    weights, biases = _init_params(arch, output_mode, rng)
    if output_mode == "relu_regression":
        # start the output unit alive; an all-negative ReLU head never recovers
        biases[-1][:] = float(y.mean()) if y.size else 0.5
    model = MlpModel(
        layer_sizes=arch,
        weights=weights,
        biases=biases,
        dropout=tuple(dropout),
        output_mode=output_mode,
        n_classes=k,
        train_config={
            "epochs": epochs,
            "batch": batch,
            "lr": lr,
            "seed": seed,
        },
    )

    n = X.shape[0]
    batch = max(1, min(batch, n))
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            rows = order[start : start + batch]
            xb, yb = X[rows], y[rows]
            masks = None
            if dropout[0] > 0.0 or dropout[1] > 0.0:
                masks = []
                for rate, width in zip(dropout, (arch[1], arch[2])):
                    if rate > 0.0:
                        keep = rng.random((len(rows), width)) >= rate
                        masks.append(keep / (1.0 - rate))
                    else:
                        masks.append(np.ones((len(rows), width)))
            loss, gw, gb = loss_and_grads(model, xb, yb, dropout_masks=masks)
            if not np.isfinite(loss):
                raise NumericalFailure("training diverged to a non-finite loss")
            for wi, g in zip(model.weights, gw):
                wi -= lr * g
            for bi, g in zip(model.biases, gb):
                bi -= lr * g
    return model


def mlp_predict(model: MlpModel, X) -> np.ndarray:
    return model.predict(X)


def mlp_predict_proba(model: MlpModel, X) -> np.ndarray:
    return model.predict_proba(X)
