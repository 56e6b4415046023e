"""Deterministic 32-way image augmentation.

Each source image expands into the 8 symmetries of the square crossed with
4 post-operations (nothing, 10% zoom-in, 10% zoom-out, 2% salt-and-pepper
noise). Index 0 of the plan is the identity, so variant 0 always equals the
input. All randomness comes from an explicit seed, so a dataset can be
regenerated byte-for-byte from (manifest, seed).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ManifestInvalid
from .images import DatasetManifest, Image, Sample, read_image, resize_bilinear, write_png

DIHEDRALS = (
    "id",
    "rot90",
    "rot180",
    "rot270",
    "flip_h",
    "flip_v",
    "transpose",
    "anti_transpose",
)

POST_KINDS = ("none", "scale_out", "scale_in", "salt_pepper")

SCALE_FRACTION = 0.10
NOISE_FRACTION = 0.02

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class TransformSpec:
    """One augmentation: a dihedral element followed by a post-op."""

    dihedral: str = "id"
    post: str = "none"
    scale_fraction: float = SCALE_FRACTION
    noise_fraction: float = NOISE_FRACTION

    def __post_init__(self):
        if self.dihedral not in DIHEDRALS:
            raise ValueError(f"unknown dihedral element {self.dihedral!r}")
        if self.post not in POST_KINDS:
            raise ValueError(f"unknown post-op {self.post!r}")
        if not (0.0 < self.scale_fraction < 0.5):
            raise ValueError("scale fraction must be in (0, 0.5)")
        if not (0.0 <= self.noise_fraction <= 1.0):
            raise ValueError("noise fraction must be in [0, 1]")

    @property
    def swaps_dimensions(self) -> bool:
        return self.dihedral in ("rot90", "rot270", "transpose", "anti_transpose")


@dataclass(frozen=True)
class AugmentationPlan:
    """Ordered list of exactly 32 distinct transforms, identity first."""

    specs: tuple[TransformSpec, ...]

    def __post_init__(self):
        if len(self.specs) != 32:
            raise ValueError(f"plan must hold exactly 32 specs, got {len(self.specs)}")
        pairs = [(s.dihedral, s.post) for s in self.specs]
        if len(set(pairs)) != 32:
            raise ValueError("plan specs must be pairwise distinct")
        if pairs[0] != ("id", "none"):
            raise ValueError("plan index 0 must be the identity transform")


def default_plan() -> AugmentationPlan:
    """The full 8 dihedral x 4 post-op grid, dihedral-major, identity first."""
    specs = tuple(
        TransformSpec(dihedral=d, post=p) for d in DIHEDRALS for p in POST_KINDS
    )
    return AugmentationPlan(specs=specs)


def _apply_dihedral(px: np.ndarray, element: str) -> np.ndarray:
    if element == "id":
        return px.copy()
    if element == "rot90":  # clockwise
        return np.rot90(px, k=-1).copy()
    if element == "rot180":
        return np.rot90(px, k=2).copy()
    if element == "rot270":
        return np.rot90(px, k=1).copy()
    if element == "flip_h":  # mirror left-right
        return px[:, ::-1].copy()
    if element == "flip_v":  # mirror top-bottom
        return px[::-1, :].copy()
    if element == "transpose":
        return px.transpose(1, 0, 2).copy()
    if element == "anti_transpose":
        return px[::-1, ::-1].transpose(1, 0, 2).copy()
    raise ValueError(f"unknown dihedral element {element!r}")


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _scale_out(img: Image, fraction: float) -> Image:
    """Zoom in: upscale by 1/(1-f), then center-crop back to the input size."""
    w, h = img.width, img.height
    up_w = max(w, _round_half_up(w / (1.0 - fraction)))
    up_h = max(h, _round_half_up(h / (1.0 - fraction)))
    big = resize_bilinear(img, up_w, up_h)
    ox = (up_w - w) // 2
    oy = (up_h - h) // 2
    return Image(big.pixels[oy : oy + h, ox : ox + w].copy())


def _scale_in(img: Image, fraction: float) -> Image:
    """Zoom out: downscale by (1-f), then pad back with edge replication."""
    w, h = img.width, img.height
    dn_w = max(1, _round_half_up(w * (1.0 - fraction)))
    dn_h = max(1, _round_half_up(h * (1.0 - fraction)))
    small = resize_bilinear(img, dn_w, dn_h)
    left = (w - dn_w) // 2
    top = (h - dn_h) // 2
    padded = np.pad(
        small.pixels,
        ((top, h - dn_h - top), (left, w - dn_w - left), (0, 0)),
        mode="edge",
    )
    return Image(padded)


def _salt_pepper(img: Image, fraction: float, seed: int) -> Image:
    """Set exactly floor(p*W*H) distinct pixels to pure black or pure white."""
    n_pixels = img.width * img.height
    n_noise = int(np.floor(fraction * n_pixels))
    out = img.pixels.copy()
    if n_noise == 0:
        return Image(out)
    rng = np.random.Generator(np.random.PCG64(seed & _MASK64))
    flat_positions = rng.choice(n_pixels, size=n_noise, replace=False)
    colors = rng.integers(0, 2, size=n_noise).astype(np.uint8) * np.uint8(255)
    rows, cols = np.divmod(flat_positions, img.width)
    out[rows, cols] = colors[:, None]
    return Image(out)


def apply_transform(img: Image, spec: TransformSpec, seed: int = 0) -> Image:
    """Dihedral first, then the post-op. Only salt_pepper consumes the seed."""
    out = Image(_apply_dihedral(img.pixels, spec.dihedral))
    if spec.post == "none":
        return out
    if spec.post == "scale_out":
        return _scale_out(out, spec.scale_fraction)
    if spec.post == "scale_in":
        return _scale_in(out, spec.scale_fraction)
    if spec.post == "salt_pepper":
        return _salt_pepper(out, spec.noise_fraction, seed)
    raise ValueError(f"unknown post-op {spec.post!r}")


def generate_variants(
    img: Image, plan: AugmentationPlan | None = None, base_seed: int = 0
) -> list[Image]:
    """All 32 variants of one image; variant i uses seed = base_seed XOR i."""
    plan = plan or default_plan()
    return [
        apply_transform(img, spec, seed=(base_seed ^ i) & _MASK64)
        for i, spec in enumerate(plan.specs)
    ]


def augment_dataset(
    manifest: DatasetManifest,
    out_dir: str,
    seed: int = 0,
    plan: AugmentationPlan | None = None,
    base_dir: str | None = None,
) -> DatasetManifest:
    """Write all variants of every manifest image as PNGs under out_dir.

    Variant files are named <stem>_a00.png .. <stem>_a31.png; image j uses
    per-variant seeds seed XOR (32*j + i), so the whole dataset is a pure
    function of (manifest, seed). Returns the augmented manifest (paths
    relative to out_dir).
    """
    plan = plan or default_plan()
    os.makedirs(out_dir, exist_ok=True)
    seen_stems: set[str] = set()
    out_samples: list[Sample] = []
    for j, sample in enumerate(manifest.samples):
        stem = os.path.splitext(os.path.basename(sample.path))[0]
        if stem in seen_stems:
            raise ManifestInvalid(
                f"duplicate file stem {stem!r}; variant names would collide"
            )
        seen_stems.add(stem)
        src_path = sample.path
        if base_dir is not None and not os.path.isabs(src_path):
            src_path = os.path.join(base_dir, src_path)
        img = read_image(src_path)
        variants = generate_variants(img, plan, base_seed=(seed ^ (32 * j)) & _MASK64)
        for i, variant in enumerate(variants):
            name = f"{stem}_a{i:02d}.png"
            write_png(variant, os.path.join(out_dir, name))
            out_samples.append(Sample(path=name, label=sample.label))
    return DatasetManifest(classes=list(manifest.classes), samples=out_samples)
