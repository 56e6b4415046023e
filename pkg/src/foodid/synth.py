"""Procedural texture corpus: a stand-in dataset with known ground truth.

Each class is a distinct hue plus a concentric-ring frequency. Rings are
centered and radially symmetric, so class identity survives the flip /
rotate / scale / noise augmentations, while per-image phase, brightness
and pixel noise provide within-class variation. An optional label-noise
pass relabels a fraction of samples uniformly at random, imitating
unreliable photo captions.
"""

from __future__ import annotations

import colorsys
import os

import numpy as np

from .images import DatasetManifest, Image, Sample, write_png


def _palette(n_classes: int) -> np.ndarray:
    colors = []
    for k in range(n_classes):
        colors.append(colorsys.hsv_to_rgb(k / n_classes, 0.85, 1.0))
    return np.asarray(colors, dtype=np.float64)


def generate_texture_image(
    class_id: int, n_classes: int, size: int, rng: np.random.Generator
) -> Image:
    color = _palette(n_classes)[class_id]
    freq = 1.5 + (class_id % 5)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    brightness = rng.uniform(0.75, 1.0)
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    r = np.sqrt(coords[:, None] ** 2 + coords[None, :] ** 2) / size
    wave = 0.55 + 0.35 * np.sin(2.0 * np.pi * freq * r * 4.0 + phase)
    px = color[None, None, :] * wave[:, :, None] * brightness * 255.0
    px = px + rng.normal(0.0, 8.0, size=(size, size, 3))
    return Image(np.clip(np.floor(px + 0.5), 0, 255).astype(np.uint8))


def write_texture_corpus(
    out_dir: str,
    n_classes: int = 10,
    per_class: int = 30,
    size: int = 32,
    seed: int = 0,
) -> DatasetManifest:
    """Write PNGs plus a manifest (paths relative to out_dir, true labels)."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(seed))
    samples = []
    for cls in range(n_classes):
        for j in range(per_class):
            name = f"c{cls:02d}_{j:03d}.png"
            img = generate_texture_image(cls, n_classes, size, rng)
            write_png(img, os.path.join(out_dir, name))
            samples.append(Sample(path=name, label=cls))
    classes = [f"texture_{k:02d}" for k in range(n_classes)]
    return DatasetManifest(classes=classes, samples=samples)


def apply_label_noise(
    manifest: DatasetManifest, fraction: float, seed: int = 0
) -> DatasetManifest:
    """Relabel `fraction` of the samples uniformly at random (seeded)."""
    if not (0.0 <= fraction <= 1.0):
        raise ValueError("noise fraction must be in [0, 1]")
    rng = np.random.Generator(np.random.PCG64(seed))
    n = len(manifest.samples)
    k = len(manifest.classes)
    n_noisy = int(np.floor(fraction * n))
    noisy_rows = set(rng.choice(n, size=n_noisy, replace=False).tolist())
    samples = []
    for i, s in enumerate(manifest.samples):
        label = int(rng.integers(k)) if i in noisy_rows else s.label
        samples.append(Sample(path=s.path, label=label))
    return DatasetManifest(classes=list(manifest.classes), samples=samples)
