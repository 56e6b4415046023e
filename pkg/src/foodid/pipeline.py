"""Experiment orchestration: splits, k-fold CV, C grid search, the 3x3 grid.

The headline operation runs the dataset-variant x classifier grid
(original / augmented / mixed against mlp / gbdt / svm), evaluating each
cell on a held-out stratified split and emitting a report with enough
seeds and hyperparameters to reproduce any cell bit-for-bit.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    EmptyInput,
    LengthMismatch,
    StratifyImpossible,
    TooFewSamples,
)
from .features import FeatureMatrix, concat_features
from .learners import (
    KernelSpec,
    gbdt_train,
    mlp_train,
    scale_sigma,
    svm_train,
)

DATASET_VARIANTS = ("original", "augmented", "mixed")
CLASSIFIERS = ("mlp", "gbdt", "svm")


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.2
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not (0.0 < self.test_fraction < 1.0):
            raise ValueError("test_fraction must be in (0, 1)")


def _apportion(counts: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder allocation of `total` across classes, ties to the
    smaller index. Guarantees the per-class shares sum to exactly `total`."""
    n = counts.sum()
    quotas = counts * (total / n)
    shares = np.floor(quotas).astype(np.int64)
    remainders = quotas - shares
    short = total - shares.sum()
    order = np.lexsort((np.arange(len(counts)), -remainders))
    for idx in order[:short]:
        shares[idx] += 1
    return shares


def split_indices(labels: np.ndarray, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """(train_idx, test_idx): a seeded, optionally stratified partition.

    The test size is round(n * test_fraction) overall; stratification
    apportions it across classes by largest remainder.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.shape[0]
    if n < 2:
        raise TooFewSamples("cannot split fewer than 2 rows")
    n_test = int(np.floor(n * spec.test_fraction + 0.5))
    n_test = min(max(n_test, 0), n)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if not spec.stratified:
        order = rng.permutation(n)
        test = np.sort(order[:n_test])
        train = np.sort(order[n_test:])
        return train, test

    classes, counts = np.unique(labels, return_counts=True)
    if counts.min() < 2:
        raise StratifyImpossible("stratified split needs >= 2 samples per class")
    shares = _apportion(counts, n_test)
    test_parts = []
    for cls, share in zip(classes, shares):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(members.size)]
        test_parts.append(members[:share])
    test = np.sort(np.concatenate(test_parts)) if test_parts else np.zeros(0, np.int64)
    mask = np.ones(n, dtype=bool)
    mask[test] = False
    return np.flatnonzero(mask), test


def train_test_split(
    X: FeatureMatrix, spec: SplitSpec
) -> tuple[FeatureMatrix, FeatureMatrix]:
    train_idx, test_idx = split_indices(X.labels, spec)
    return X.take(train_idx), X.take(test_idx)


def kfold(X, k: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified k-fold index pairs. Fold sizes differ by at most one,
    globally and per class."""
    labels = X.labels if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=np.int64)
    n = labels.shape[0]
    if k < 2:
        raise TooFewSamples("k-fold needs k >= 2")
    if n < k:
        raise TooFewSamples(f"{n} rows cannot make {k} folds")
    rng = np.random.Generator(np.random.PCG64(seed))
    fold_of = np.empty(n, dtype=np.int64)
    pointer = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(members.size)]
        for row in members:
            fold_of[row] = pointer % k
            pointer += 1
    pairs = []
    for f in range(k):
        val = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        pairs.append((train, val))
    return pairs


def accuracy(pred, truth) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"{pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise EmptyInput("accuracy of an empty prediction set is undefined")
    return float((pred == truth).mean())


def grid_search_c(
    X,
    y,
    kernel: KernelSpec | None = None,
    grid=(0.1, 1.0, 10.0, 100.0),
    folds: int = 5,
    seed: int = 0,
) -> tuple[float, dict[float, float]]:
    """Mean CV accuracy for every C; returns (best_C, per-C table)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if kernel is None:
        kernel = KernelSpec(kind="rbf", sigma=scale_sigma(X))
    pairs = kfold(y, folds, seed=seed)
    per_c: dict[float, float] = {}
    for C in sorted(grid):
        scores = []
        for train_idx, val_idx in pairs:
            model = svm_train(X[train_idx], y[train_idx], C=C, kernel=kernel, seed=seed)
            scores.append(accuracy(model.predict(X[val_idx]), y[val_idx]))
        per_c[float(C)] = float(np.mean(scores))
    best_c = max(sorted(per_c), key=lambda c: per_c[c])
    return best_c, per_c


@dataclass
class ExperimentReport:
    grid: dict[str, dict[str, float]]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for variant in DATASET_VARIANTS:
            if variant not in self.grid:
                raise ValueError(f"missing dataset variant {variant!r}")
            for clf in CLASSIFIERS:
                acc = self.grid[variant].get(clf)
                if acc is None or not (0.0 <= acc <= 1.0):
                    raise ValueError(f"bad accuracy for ({variant}, {clf}): {acc!r}")

    def to_json_dict(self) -> dict:
        ordered = {
            variant: {clf: self.grid[variant][clf] for clf in CLASSIFIERS}
            for variant in DATASET_VARIANTS
        }
        return {"grid": ordered, "metadata": self.metadata}

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")


def _default_classifier_config() -> dict:
    return {
        "mlp": {
            "hidden": [512, 128],
            "dropout": [0.5, 0.5],
            "epochs": 50,
            "batch": 32,
            "lr": 0.1,
            "output_mode": "softmax",
        },
        "gbdt": {
            "rounds": 100,
            "learning_rate": 0.1,
            "max_depth": 4,
            "lambda": 1.0,
            "gamma": 0.0,
        },
        "svm": {"C": 10.0, "kernel": {"kind": "rbf"}, "tol": 1e-3},
    }


def _merge_config(defaults: dict, override: dict | None) -> dict:
    merged = {k: dict(v) for k, v in defaults.items()}
    for name, params in (override or {}).items():
        if name not in merged:
            raise ConfigError(f"unknown classifier {name!r}")
        merged[name].update(params)
    return merged


def _train_cell(clf: str, params: dict, train: FeatureMatrix, seed: int):
    k = len(train.classes) if train.classes else int(train.labels.max()) + 1
    if clf == "mlp":
        hidden = params.get("hidden", [512, 128])
        mode = params.get("output_mode", "softmax")
        out = k if mode == "softmax" else 1
        arch = (train.d, int(hidden[0]), int(hidden[1]), out)
        model = mlp_train(
            train.values,
            train.labels,
            arch=arch,
            dropout=tuple(params.get("dropout", (0.5, 0.5))),
            epochs=int(params.get("epochs", 50)),
            batch=int(params.get("batch", 32)),
            lr=float(params.get("lr", 0.1)),
            seed=seed,
            output_mode=mode,
            n_classes=k,
        )
        resolved = {"arch": list(arch), **{k2: params[k2] for k2 in params}}
        return model, resolved
    if clf == "gbdt":
        model = gbdt_train(
            train.values,
            train.labels,
            rounds=int(params.get("rounds", 100)),
            learning_rate=float(params.get("learning_rate", 0.1)),
            max_depth=int(params.get("max_depth", 4)),
            reg_lambda=float(params.get("lambda", 1.0)),
            gamma=float(params.get("gamma", 0.0)),
            seed=seed,
            n_classes=k,
        )
        return model, dict(params)
    if clf == "svm":
        kdict = dict(params.get("kernel", {"kind": "rbf"}))
        if kdict.get("kind", "rbf") == "rbf" and "sigma" not in kdict:
            kdict["sigma"] = scale_sigma(train.values)
        kernel = KernelSpec.from_json_dict(kdict)
        model = svm_train(
            train.values,
            train.labels,
            C=float(params.get("C", 10.0)),
            kernel=kernel,
            tol=float(params.get("tol", 1e-3)),
            seed=seed,
        )
        resolved = dict(params)
        resolved["kernel"] = kernel.to_json_dict()
        return model, resolved
    raise ConfigError(f"unknown classifier {clf!r}")


def run_grid(
    datasets: dict[str, FeatureMatrix],
    classifiers: dict | None = None,
    split: SplitSpec | None = None,
    train_seed: int = 0,
) -> ExperimentReport:
    """Train/evaluate every (variant, classifier) cell on in-memory features.

    `datasets` must name original and augmented; mixed defaults to their
    row-wise concatenation.
    """
    split = split or SplitSpec()
    for required in ("original", "augmented"):
        if required not in datasets:
            raise ConfigError(f"datasets must include {required!r}")
    datasets = dict(datasets)
    if "mixed" not in datasets:
        datasets["mixed"] = concat_features(
            datasets["original"], datasets["augmented"], source="original+augmented"
        )
    config = _merge_config(_default_classifier_config(), classifiers)

    grid: dict[str, dict[str, float]] = {}
    meta_cells: dict[str, dict] = {}
    meta_datasets: dict[str, dict] = {}
    for variant in DATASET_VARIANTS:
        fm = datasets[variant]
        train, test = train_test_split(fm, split)
        meta_datasets[variant] = {
            "rows": fm.n,
            "dim": fm.d,
            "train_rows": train.n,
            "test_rows": test.n,
            "source": fm.source,
        }
        grid[variant] = {}
        for clf in CLASSIFIERS:
            started = time.perf_counter()
            model, resolved = _train_cell(clf, config[clf], train, train_seed)
            acc = accuracy(model.predict(test.values), test.labels)
            grid[variant][clf] = acc
            meta_cells[f"{variant}/{clf}"] = {
                "accuracy": acc,
                "hyperparameters": resolved,
                "wall_clock_seconds": round(time.perf_counter() - started, 3),
            }
    report = ExperimentReport(
        grid=grid,
        metadata={
            "split": {
                "test_fraction": split.test_fraction,
                "seed": split.seed,
                "stratified": split.stratified,
            },
            "train_seed": train_seed,
            "datasets": meta_datasets,
            "cells": meta_cells,
        },
    )
    return report


def load_experiment_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read experiment config {path}: {exc}") from exc
    if not isinstance(config, dict) or "datasets" not in config:
        raise ConfigError('experiment config must be an object with "datasets"')
    return config


def run_experiment(config: dict, base_dir: str | None = None) -> ExperimentReport:
    """File-driven wrapper around run_grid for the CLI.

    Each dataset entry either points at an FMX1 feature file
    ({"features": path}) or at a manifest to extract features from
    ({"manifest": path, "weights": bundle path}); mixed falls back to the
    concatenation of original and augmented.
    """
    import os

    from .convnet import load_weight_bundle
    from .features import extract_features, load_features
    from .images import load_manifest

    def resolve(p: str) -> str:
        if base_dir is not None and not os.path.isabs(p):
            return os.path.join(base_dir, p)
        return p

    datasets = {}
    normalizations = {}
    spec = config.get("datasets")
    if not isinstance(spec, dict):
        raise ConfigError('"datasets" must be an object')
    bundles: dict[str, object] = {}
    for variant, entry in spec.items():
        if variant not in DATASET_VARIANTS:
            raise ConfigError(f"unknown dataset variant {variant!r}")
        if not isinstance(entry, dict):
            raise ConfigError(f"dataset {variant!r} must be an object")
        if "features" in entry:
            datasets[variant] = load_features(resolve(entry["features"]))
        elif "manifest" in entry:
            if "weights" not in entry:
                raise ConfigError(f'dataset {variant!r} needs a "weights" bundle')
            weights_path = resolve(entry["weights"])
            if weights_path not in bundles:
                bundles[weights_path] = load_weight_bundle(weights_path)
            bundle = bundles[weights_path]
            manifest_path = resolve(entry["manifest"])
            datasets[variant] = extract_features(
                load_manifest(manifest_path),
                bundle,
                base_dir=os.path.dirname(os.path.abspath(manifest_path)),
                source=entry["manifest"],
            )
            normalizations[variant] = bundle.normalization.to_json_dict()
        else:
            raise ConfigError(
                f'dataset {variant!r} must name a "features" file or a "manifest"'
            )
    split = SplitSpec(
        test_fraction=float(config.get("test_fraction", 0.2)),
        seed=int(config.get("split_seed", config.get("seed", 0))),
        stratified=bool(config.get("stratified", True)),
    )
    report = run_grid(
        datasets,
        classifiers=config.get("classifiers"),
        split=split,
        train_seed=int(config.get("train_seed", config.get("seed", 0))),
    )
    if normalizations:
        report.metadata["normalization"] = normalizations
    return report
