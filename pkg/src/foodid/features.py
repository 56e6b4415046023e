"""Feature matrices: extraction from image manifests and the FMX1 file format.

FMX1 layout: magic "FMX1", u32 LE row count n, u32 LE feature dim d,
n*d float32 LE values row-major, n u16 LE labels, then a trailing UTF-8
JSON object {"classes": [...], "source": str, "seed": int} running to EOF.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import binio
from .convnet import WeightBundle, forward
from .errors import FeatureFileParse, FoodidError, NumericalFailure, ValidationError
from .images import DatasetManifest, NormalizationSpec, image_to_tensor, read_image, resize_bilinear

FMX1_MAGIC = b"FMX1"


@dataclass
class FeatureMatrix:
    """N x D float32 features with one integer label per row."""

    values: np.ndarray
    labels: np.ndarray
    classes: tuple[str, ...] = ()
    source: str = ""
    seed: int = 0

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.values.ndim != 2:
            raise ValidationError(f"values must be 2-D, got shape {self.values.shape}")
        if self.labels.shape != (self.values.shape[0],):
            raise ValidationError(
                f"labels shape {self.labels.shape} != ({self.values.shape[0]},)"
            )
        if not np.all(np.isfinite(self.values)):
            raise NumericalFailure("feature matrix holds NaN or Inf")
        if self.n and self.labels.min() < 0:
            raise ValidationError("labels must be non-negative")
        if self.classes and self.n and self.labels.max() >= len(self.classes):
            raise ValidationError("label out of range for class list")
        self.classes = tuple(self.classes)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def take(self, indices: np.ndarray) -> "FeatureMatrix":
        idx = np.asarray(indices, dtype=np.int64)
        return FeatureMatrix(
            values=self.values[idx],
            labels=self.labels[idx],
            classes=self.classes,
            source=self.source,
            seed=self.seed,
        )


def concat_features(a: FeatureMatrix, b: FeatureMatrix, source: str = "") -> FeatureMatrix:
    """Row-wise concatenation; the pieces must agree on dimension and classes."""
    if a.d != b.d:
        raise ValidationError(f"feature dims differ: {a.d} vs {b.d}")
    if a.classes and b.classes and a.classes != b.classes:
        raise ValidationError("class lists differ between feature matrices")
    return FeatureMatrix(
        values=np.concatenate([a.values, b.values], axis=0),
        labels=np.concatenate([a.labels, b.labels]),
        classes=a.classes or b.classes,
        source=source or f"{a.source}+{b.source}",
        seed=a.seed,
    )


def extract_features(
    manifest: DatasetManifest,
    bundle: WeightBundle,
    norm: NormalizationSpec | None = None,
    base_dir: str | None = None,
    source: str = "",
) -> FeatureMatrix:
    """Decode, resize, normalize and run every manifest image through the bundle.

    Row order follows the manifest. Image errors are re-raised with the
    offending path attached.
    """
    norm = norm or bundle.normalization
    _, in_h, in_w = bundle.input_shape
    rows = np.empty((len(manifest.samples), bundle.feature_dim), dtype=np.float32)
    for i, sample in enumerate(manifest.samples):
        path = sample.path
        if base_dir is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        try:
            img = read_image(path)
        except FoodidError as exc:
            raise type(exc)(f"{sample.path}: {exc}") from exc
        tensor = image_to_tensor(resize_bilinear(img, in_w, in_h), norm)
        rows[i] = forward(bundle, tensor)
    if rows.size and not np.all(np.isfinite(rows)):
        raise NumericalFailure("non-finite activation while extracting features")
    return FeatureMatrix(
        values=rows,
        labels=manifest.labels(),
        classes=tuple(manifest.classes),
        source=source,
    )


def save_features(fm: FeatureMatrix, path: str) -> None:
    if fm.n and fm.labels.max() > 0xFFFF:
        raise ValidationError("labels exceed the u16 range of the FMX1 format")
    meta = {"classes": list(fm.classes), "source": fm.source, "seed": fm.seed}
    with open(path, "wb") as fh:
        fh.write(FMX1_MAGIC)
        binio.write_u32(fh, fm.n)
        binio.write_u32(fh, fm.d)
        fh.write(np.ascontiguousarray(fm.values, dtype="<f4").tobytes(order="C"))
        fh.write(np.ascontiguousarray(fm.labels, dtype="<u2").tobytes(order="C"))
        fh.write(json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8"))


def load_features(path: str) -> FeatureMatrix:
    try:
        with open(path, "rb") as fh:
            magic = binio.read_exact(fh, 4)
            if magic != FMX1_MAGIC:
                raise FeatureFileParse(f"bad magic {magic!r}")
            n = binio.read_u32(fh)
            d = binio.read_u32(fh)
            values = np.frombuffer(binio.read_exact(fh, 4 * n * d), dtype="<f4")
            labels = np.frombuffer(binio.read_exact(fh, 2 * n), dtype="<u2")
            tail = fh.read()
        meta = json.loads(tail.decode("utf-8")) if tail else {}
    except binio.TruncatedFile as exc:
        raise FeatureFileParse(f"truncated feature file: {exc}") from exc
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FeatureFileParse(f"cannot parse feature file {path}: {exc}") from exc
    return FeatureMatrix(
        values=values.reshape(n, d).copy(),
        labels=labels.astype(np.int64),
        classes=tuple(meta.get("classes", ())),
        source=str(meta.get("source", "")),
        seed=int(meta.get("seed", 0)),
    )
