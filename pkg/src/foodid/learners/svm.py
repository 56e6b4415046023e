"""Kernel SVM trained with sequential minimal optimization.

Multiclass problems are decomposed one-vs-rest; every binary subproblem is
solved by Platt-style SMO with an error cache and the |E1 - E2| second-
choice heuristic. The fallback scans start at seeded positions, so training
is fully deterministic for a given (data, C, kernel, seed).

Decision convention: f(x) = sum_i alpha_i y_i K(x_i, x) + b.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateLabels, DimensionMismatch


@dataclass(frozen=True)
class KernelSpec:
    """Either a plain dot product or exp(-|x - x'|^2 / (2 sigma^2))."""

    kind: str = "rbf"
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError("rbf sigma must be finite and positive")

    @property
    def gamma(self) -> float:
        return 1.0 / (2.0 * self.sigma * self.sigma)

    def to_json_dict(self) -> dict:
        if self.kind == "linear":
            return {"kind": "linear"}
        return {"kind": "rbf", "sigma": self.sigma}

    @classmethod
    def from_json_dict(cls, d: dict) -> "KernelSpec":
        if d.get("kind") == "linear":
            return cls(kind="linear")
        return cls(kind="rbf", sigma=float(d.get("sigma", 1.0)))


def kernel_eval(x: np.ndarray, x2: np.ndarray, spec: KernelSpec) -> float:
    x = np.asarray(x, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x.shape != x2.shape:
        raise DimensionMismatch(f"kernel operands differ: {x.shape} vs {x2.shape}")
    if spec.kind == "linear":
        return float(x @ x2)
    return float(np.exp(-spec.gamma * ((x - x2) ** 2).sum()))


def kernel_matrix(A: np.ndarray, B: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """K[i, j] = k(A[i], B[j]) as float64."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"dims differ: {A.shape[1]} vs {B.shape[1]}")
    if spec.kind == "linear":
        return A @ B.T
    aa = np.einsum("ij,ij->i", A, A)[:, None]
    bb = np.einsum("ij,ij->i", B, B)[None, :]
    d2 = np.maximum(aa + bb - 2.0 * (A @ B.T), 0.0)
    return np.exp(-spec.gamma * d2)


def scale_sigma(X: np.ndarray) -> float:
    """Sigma giving gamma = 1 / (D * Var(X)), the usual "scale" default."""
    X = np.asarray(X, dtype=np.float64)
    var = float(X.var())
    if var <= 0.0:
        var = 1.0
    return float(np.sqrt(X.shape[1] * var / 2.0))


class _KernelRows:
    """Row-on-demand kernel with a bounded LRU cache (full Gram when small)."""

    def __init__(self, X: np.ndarray, spec: KernelSpec, max_rows: int = 1024):
        self.X = X
        self.spec = spec
        self.n = X.shape[0]
        if spec.kind == "rbf":
            self._sq = np.einsum("ij,ij->i", X, X)
        self._full = None
        if self.n <= 2048:
            self._full = kernel_matrix(X, X, spec)
        self._cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self._max_rows = max_rows

    def row(self, i: int) -> np.ndarray:
        if self._full is not None:
            return self._full[i]
        cached = self._cache.get(i)
        if cached is not None:
            self._cache.move_to_end(i)
            return cached
        if self.spec.kind == "linear":
            row = self.X @ self.X[i]
        else:
            d2 = np.maximum(self._sq + self._sq[i] - 2.0 * (self.X @ self.X[i]), 0.0)
            row = np.exp(-self.spec.gamma * d2)
        self._cache[i] = row
        if len(self._cache) > self._max_rows:
            self._cache.popitem(last=False)
        return row

    def diag(self, i: int) -> float:
        if self.spec.kind == "rbf":
            return 1.0
        return float(self.X[i] @ self.X[i])


class _BinarySmo:
    """One two-class subproblem: max dual subject to 0 <= alpha <= C."""

    _STEP_EPS = 1e-12

    def __init__(self, X, y, C, spec, tol, seed, max_passes):
        self.X = X
        self.y = y.astype(np.float64)
        self.C = float(C)
        self.kernel = _KernelRows(X, spec)
        self.tol = float(tol)
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.max_passes = max_passes
        self.n = X.shape[0]
        self.alphas = np.zeros(self.n)
        self.b = 0.0
        self.errors = -self.y.copy()  # f = 0 initially, E = f - y

    def _take_step(self, i1: int, i2: int) -> bool:
        if i1 == i2:
            return False
        a1, a2 = self.alphas[i1], self.alphas[i2]
        y1, y2 = self.y[i1], self.y[i2]
        e1, e2 = self.errors[i1], self.errors[i2]
        s = y1 * y2
        if s > 0:
            low, high = max(0.0, a1 + a2 - self.C), min(self.C, a1 + a2)
        else:
            low, high = max(0.0, a2 - a1), min(self.C, self.C + a2 - a1)
        if low >= high:
            return False
        k11 = self.kernel.diag(i1)
        k22 = self.kernel.diag(i2)
        row1 = self.kernel.row(i1)
        k12 = row1[i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2_new = a2 + y2 * (e1 - e2) / eta
            a2_new = min(max(a2_new, low), high)
        else:
            # Flat or convex along the constraint line, so the dual is
            # maximized at an endpoint. Along the line the dual changes by
            # slope*t - eta*t^2/2 with slope = y2*(E1 - E2), t = a2_new - a2.
            slope = y2 * (e1 - e2)
            t_low, t_high = low - a2, high - a2
            gain_low = slope * t_low - 0.5 * eta * t_low * t_low
            gain_high = slope * t_high - 0.5 * eta * t_high * t_high
            if gain_low > gain_high + self._STEP_EPS:
                a2_new = low
            elif gain_high > gain_low + self._STEP_EPS:
                a2_new = high
            else:
                return False
        if abs(a2_new - a2) < self._STEP_EPS * (a2_new + a2 + self._STEP_EPS):
            return False
        a1_new = a1 + s * (a2 - a2_new)
        # pure roundoff guard; the pair update preserves sum(alpha * y)
        a1_new = min(max(a1_new, 0.0), self.C)

        d1 = y1 * (a1_new - a1)
        d2 = y2 * (a2_new - a2)
        b1 = self.b - e1 - d1 * k11 - d2 * k12
        b2 = self.b - e2 - d1 * k12 - d2 * k22
        if 0.0 < a1_new < self.C:
            b_new = b1
        elif 0.0 < a2_new < self.C:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)

        row2 = self.kernel.row(i2)
        self.errors += d1 * row1 + d2 * row2 + (b_new - self.b)
        self.alphas[i1] = a1_new
        self.alphas[i2] = a2_new
        self.b = b_new
        # keep the cache authoritative at the two active points
        self.errors[i1] = self._decision_at(i1) - y1
        self.errors[i2] = self._decision_at(i2) - y2
        return True

    def _decision_at(self, i: int) -> float:
        active = self.alphas > 0.0
        if not active.any():
            return self.b
        return float((self.alphas[active] * self.y[active]) @ self.kernel.row(i)[active] + self.b)

    def _examine(self, i2: int) -> bool:
        y2 = self.y[i2]
        a2 = self.alphas[i2]
        e2 = self.errors[i2]
        r2 = e2 * y2
        if not ((r2 < -self.tol and a2 < self.C) or (r2 > self.tol and a2 > 0.0)):
            return False
        non_bound = np.flatnonzero((self.alphas > 0.0) & (self.alphas < self.C))
        if non_bound.size > 1:
            gaps = np.abs(self.errors[non_bound] - e2)
            i1 = int(non_bound[int(gaps.argmax())])
            if self._take_step(i1, i2):
                return True
        if non_bound.size:
            start = int(self.rng.integers(non_bound.size))
            for offset in range(non_bound.size):
                i1 = int(non_bound[(start + offset) % non_bound.size])
                if self._take_step(i1, i2):
                    return True
        start = int(self.rng.integers(self.n))
        for offset in range(self.n):
            i1 = (start + offset) % self.n
            if self._take_step(i1, i2):
                return True
        return False

    def train(self) -> None:
        examine_all = True
        passes = 0
        while passes < self.max_passes:
            changed = 0
            if examine_all:
                for i in range(self.n):
                    changed += self._examine(i)
            else:
                for i in np.flatnonzero((self.alphas > 0.0) & (self.alphas < self.C)):
                    changed += self._examine(int(i))
            passes += 1
            if examine_all:
                if changed == 0:
                    break  # a clean full sweep means KKT holds everywhere
                examine_all = False
            elif changed == 0:
                examine_all = True

    def kkt_violations(self) -> np.ndarray:
        """Per-sample slack of the KKT conditions (0 when satisfied).

        Multipliers within rounding distance of a box bound count as at
        bound; clipping leaves them an ulp short of C occasionally.
        """
        decisions = np.array([self._decision_at(i) for i in range(self.n)])
        r = (decisions - self.y) * self.y
        bound_eps = 1e-9 * max(1.0, self.C)
        viol = np.zeros(self.n)
        lower = self.alphas <= bound_eps
        upper = self.alphas >= self.C - bound_eps
        middle = ~lower & ~upper
        viol[lower] = np.maximum(0.0, -r[lower])
        viol[upper] = np.maximum(0.0, r[upper])
        viol[middle] = np.abs(r[middle])
        return viol


@dataclass(frozen=True)
class BinaryMachine:
    support_vectors: np.ndarray  # (m, D)
    dual_coef: np.ndarray  # alpha_i * y_i, (m,)
    bias: float

    def decision(self, X: np.ndarray, spec: KernelSpec) -> np.ndarray:
        if self.support_vectors.size == 0:
            return np.full(X.shape[0], self.bias)
        return kernel_matrix(X, self.support_vectors, spec) @ self.dual_coef + self.bias


@dataclass(frozen=True)
class SvmModel:
    classes: tuple[int, ...]
    machines: tuple[BinaryMachine, ...]
    C: float
    kernel: KernelSpec
    n_features: int
    seed: int = 0
    diagnostics: dict = field(default_factory=dict)

    def decision_matrix(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"expected (n, {self.n_features}) inputs, got {X.shape}"
            )
        if X.shape[0] == 0:
            return np.zeros((0, len(self.machines)))
        return np.stack([m.decision(X, self.kernel) for m in self.machines], axis=1)

    def predict(self, X) -> np.ndarray:
        if np.asarray(X).shape[0] == 0:
            return np.zeros(0, dtype=np.int64)
        scores = self.decision_matrix(X)
        return np.asarray(self.classes, dtype=np.int64)[scores.argmax(axis=1)]


def svm_train(
    X,
    y,
    C: float = 1.0,
    kernel: KernelSpec | None = None,
    tol: float = 1e-3,
    max_passes: int = 10_000,
    seed: int = 0,
    collect_diagnostics: bool = False,
) -> SvmModel:
    """One-vs-rest SMO training; `kernel=None` picks RBF with the scale sigma."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X {X.shape} does not align with y {y.shape}")
    if X.shape[0] < 2:
        raise DegenerateLabels("need at least two samples")
    classes = tuple(int(c) for c in np.unique(y))
    if len(classes) < 2:
        raise DegenerateLabels("training labels contain a single class")
    if kernel is None:
        kernel = KernelSpec(kind="rbf", sigma=scale_sigma(X))

    machines = []
    diagnostics: dict = {"per_class": []}
    for ci, cls in enumerate(classes):
        target = np.where(y == cls, 1.0, -1.0)
        smo = _BinarySmo(X, target, C, kernel, tol, seed + ci, max_passes)
        smo.train()
        active = smo.alphas > 0.0
        machines.append(
            BinaryMachine(
                support_vectors=X[active].copy(),
                dual_coef=(smo.alphas[active] * target[active]).copy(),
                bias=smo.b,
            )
        )
        if collect_diagnostics:
            diagnostics["per_class"].append(
                {
                    "class": cls,
                    "alpha_min": float(smo.alphas.min()),
                    "alpha_max": float(smo.alphas.max()),
                    "alpha_y_sum": float((smo.alphas * target).sum()),
                    "max_kkt_violation": float(smo.kkt_violations().max()),
                    "n_support": int(active.sum()),
                }
            )
    return SvmModel(
        classes=classes,
        machines=tuple(machines),
        C=float(C),
        kernel=kernel,
        n_features=X.shape[1],
        seed=seed,
        diagnostics=diagnostics if collect_diagnostics else {},
    )


def svm_predict(model: SvmModel, X) -> np.ndarray:
    return model.predict(np.asarray(X, dtype=np.float64))
