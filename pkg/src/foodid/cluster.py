"""KMeans clustering and the silhouette k-sweep used to sanity-check features.

kmeans_fit runs seeded k-means++ with Lloyd iterations, keeping the best of
ten restarts by inertia. Empty clusters are re-seeded to the point that is
currently farthest from its assigned centroid. Everything is derived from
the (data, k, seed) triple, so fits are exactly reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingleCluster, TooFewSamples
from .features import FeatureMatrix


def _as_matrix(X) -> np.ndarray:
    if isinstance(X, FeatureMatrix):
        return X.values.astype(np.float64)
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    return arr


def _pairwise_sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, (len(A), len(B)), clipped at zero."""
    aa = np.einsum("ij,ij->i", A, A)[:, None]
    bb = np.einsum("ij,ij->i", B, B)[None, :]
    d2 = aa + bb - 2.0 * (A @ B.T)
    return np.maximum(d2, 0.0)


@dataclass(frozen=True)
class KMeansModel:
    k: int
    centroids: np.ndarray
    inertia: float
    iterations_run: int
    labels: np.ndarray  # training assignment, row-aligned with the fit input

    def assign(self, X) -> np.ndarray:
        """Nearest-centroid labels; ties go to the smaller cluster index."""
        d2 = _pairwise_sq_dists(_as_matrix(X), self.centroids)
        return d2.argmin(axis=1)


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]), dtype=np.float64)
    centroids[0] = X[rng.integers(n)]
    d2 = _pairwise_sq_dists(X, centroids[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = X[idx]
        d2 = np.minimum(d2, _pairwise_sq_dists(X, centroids[j : j + 1])[:, 0])
    return centroids


def _lloyd(
    X: np.ndarray, centroids: np.ndarray, max_iter: int, tol: float
) -> tuple[np.ndarray, np.ndarray, float, int]:
    k = centroids.shape[0]
    labels = np.zeros(X.shape[0], dtype=np.int64)
    prev_inertia = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        d2 = _pairwise_sq_dists(X, centroids)
        labels = d2.argmin(axis=1)
        # exact per-point distances (the Gram trick leaves ~1e-16 residue)
        point_d2 = ((X - centroids[labels]) ** 2).sum(axis=1)

        for empty in np.flatnonzero(np.bincount(labels, minlength=k) == 0):
            far = int(point_d2.argmax())
            centroids[empty] = X[far]
            labels[far] = empty
            point_d2[far] = 0.0

        inertia = float(point_d2.sum())
        # Lloyd monotonicity, modulo float roundoff
        assert inertia <= prev_inertia * (1 + 1e-9) + 1e-12, "inertia increased"
        prev_inertia = inertia

        new_centroids = centroids.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new_centroids[j] = X[members].mean(axis=0)
        shift = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        if shift < tol:
            break

    d2 = _pairwise_sq_dists(X, centroids)
    labels = d2.argmin(axis=1)
    inertia = float(((X - centroids[labels]) ** 2).sum())
    return centroids, labels, inertia, iterations


def kmeans_fit(
    X,
    k: int,
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-4,
    n_init: int = 10,
) -> KMeansModel:
    """Best-of-n_init seeded k-means++ fit."""
    data = _as_matrix(X)
    if k < 1:
        raise ValueError("k must be >= 1")
    if data.shape[0] < k:
        raise TooFewSamples(f"{data.shape[0]} samples for k={k}")
    rng = np.random.Generator(np.random.PCG64(seed))
    best: tuple[float, np.ndarray, np.ndarray, int] | None = None
    for _ in range(n_init):
        centroids = _kmeans_pp_init(data, k, rng)
        centroids, labels, inertia, iters = _lloyd(data, centroids, max_iter, tol)
        if best is None or inertia < best[0]:
            best = (inertia, centroids, labels, iters)
    inertia, centroids, labels, iters = best
    return KMeansModel(
        k=k, centroids=centroids, inertia=inertia, iterations_run=iters, labels=labels
    )


def silhouette_mean(X, labels) -> float:
    """Mean silhouette coefficient (b - a) / max(a, b) over all samples.

    a is the mean distance to the sample's own cluster (0 for singletons by
    convention), b the smallest mean distance to any other cluster; 0/0
    degenerates to 0.
    """
    data = _as_matrix(X)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (data.shape[0],):
        raise ValueError("labels must align with rows")
    unique, dense = np.unique(labels, return_inverse=True)
    if unique.size < 2:
        raise SingleCluster("silhouette needs at least 2 distinct labels")
    n, k = data.shape[0], unique.size
    counts = np.bincount(dense, minlength=k).astype(np.float64)
    onehot = np.zeros((n, k), dtype=np.float64)
    onehot[np.arange(n), dense] = 1.0

    scores = np.empty(n, dtype=np.float64)
    chunk = max(1, min(n, 2 ** 22 // max(n, 1)))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        dists = np.sqrt(_pairwise_sq_dists(data[start:stop], data))
        cluster_sums = dists @ onehot  # (chunk, k)
        rows = np.arange(start, stop)
        own = dense[rows]
        own_counts = counts[own]
        with np.errstate(invalid="ignore", divide="ignore"):
            a = cluster_sums[np.arange(stop - start), own] / np.maximum(own_counts - 1, 1)
            means = cluster_sums / counts[None, :]
            means[np.arange(stop - start), own] = np.inf
            b = means.min(axis=1)
            denom = np.maximum(a, b)
            s = np.where(denom > 0.0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
        s[own_counts == 1] = 0.0
        scores[rows] = s
    return float(scores.mean())


@dataclass(frozen=True)
class SilhouetteReport:
    per_k: dict[int, float]
    best_k: int


def k_sweep(X, k_min: int = 4, k_max: int = 12, seed: int = 0) -> SilhouetteReport:
    """Fit KMeans for each k in [k_min, k_max] and score it by mean silhouette."""
    data = _as_matrix(X)
    if not (1 < k_min <= k_max):
        raise ValueError("need 1 < k_min <= k_max")
    if data.shape[0] < k_max:
        raise TooFewSamples(f"{data.shape[0]} samples for k_max={k_max}")
    per_k: dict[int, float] = {}
    for k in range(k_min, k_max + 1):
        model = kmeans_fit(data, k, seed=seed)
        per_k[k] = silhouette_mean(data, model.labels)
    best_k = max(sorted(per_k), key=lambda k: per_k[k])
    return SilhouetteReport(per_k=per_k, best_k=best_k)
