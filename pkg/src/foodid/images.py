"""Image decoding, bilinear resizing, tensor conversion, and dataset manifests.

Images are kept as (H, W, 3) uint8 arrays wrapped in a small dataclass.
Decoding goes through Pillow; everything downstream of decoding is plain
numpy so the pixel math stays explicit and portable.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PilImage, UnidentifiedImageError

from .errors import (
    MalformedImage,
    ManifestInvalid,
    ManifestParse,
    UnsupportedFormat,
)

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_JPEG_MAGIC = b"\xff\xd8\xff"


@dataclass(frozen=True)
class Image:
    """An RGB raster: pixels is (height, width, 3) uint8, row-major."""

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ValueError(f"pixels must be (H, W, 3) uint8, got {px.shape} {px.dtype}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def same_pixels(self, other: "Image") -> bool:
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )


@dataclass(frozen=True)
class NormalizationSpec:
    """How 8-bit pixels map to float inputs.

    mode "unit" divides by 255; "mean_subtract" divides by 255 and then
    subtracts a per-channel mean (each mean in [0, 1]).
    """

    mode: str = "unit"
    channel_means: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.mode not in ("unit", "mean_subtract"):
            raise ValueError(f"unknown normalization mode {self.mode!r}")
        if self.mode == "mean_subtract":
            for m in self.channel_means:
                if not (0.0 <= m <= 1.0):
                    raise ValueError("channel means must be in [0, 1]")

    def to_json_dict(self) -> dict:
        if self.mode == "unit":
            return {"mode": "unit"}
        return {"mode": "mean_subtract", "channel_means": list(self.channel_means)}

    @classmethod
    def from_json_dict(cls, d: dict) -> "NormalizationSpec":
        mode = d.get("mode", "unit")
        means = tuple(d.get("channel_means", (0.0, 0.0, 0.0)))
        if mode == "unit":
            return cls(mode="unit")
        return cls(mode=mode, channel_means=means)  # type: ignore[arg-type]


def decode_image(data: bytes) -> Image:
    """Decode PNG or baseline JPEG bytes into an RGB Image.

    Grayscale sources are replicated across the three channels and any
    alpha channel is dropped.
    """
    if not (data.startswith(_PNG_MAGIC) or data.startswith(_JPEG_MAGIC)):
        raise UnsupportedFormat("not a PNG or JPEG file")
    try:
        with PilImage.open(io.BytesIO(data)) as pil:
            pil.load()
            rgb = pil.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise MalformedImage(f"undecodable image bytes: {exc}") from exc
    return Image(arr)


def read_image(path: str) -> Image:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise MalformedImage(f"cannot read {path}: {exc}") from exc
    return decode_image(data)


def encode_png(img: Image) -> bytes:
    buf = io.BytesIO()
    PilImage.fromarray(img.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def write_png(img: Image, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_png(img))


def _sample_positions(out_size: int, src_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Half-pixel-center source coordinates, clamped, split into lo/hi/frac."""
    scale = src_size / out_size
    coords = (np.arange(out_size, dtype=np.float64) + 0.5) * scale - 0.5
    coords = np.clip(coords, 0.0, src_size - 1)
    lo = np.floor(coords).astype(np.int64)
    hi = np.minimum(lo + 1, src_size - 1)
    frac = coords - lo
    return lo, hi, frac


def resize_bilinear(img: Image, out_w: int, out_h: int) -> Image:
    """Bilinear resize with half-pixel-center mapping and half-up rounding."""
    if out_w < 1 or out_h < 1:
        raise ValueError("target dimensions must be >= 1")
    if out_w == img.width and out_h == img.height:
        return Image(img.pixels.copy())

    src = img.pixels.astype(np.float64)
    x0, x1, fx = _sample_positions(out_w, img.width)
    y0, y1, fy = _sample_positions(out_h, img.height)

    top = src[y0][:, x0] * (1.0 - fx)[None, :, None] + src[y0][:, x1] * fx[None, :, None]
    bot = src[y1][:, x0] * (1.0 - fx)[None, :, None] + src[y1][:, x1] * fx[None, :, None]
    out = top * (1.0 - fy)[:, None, None] + bot * fy[:, None, None]

    out = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return Image(out)


def image_to_tensor(img: Image, norm: NormalizationSpec | None = None) -> np.ndarray:
    """Convert to a channel-major (3, H, W) float32 tensor under `norm`."""
    norm = norm or NormalizationSpec()
    chw = img.pixels.astype(np.float32).transpose(2, 0, 1) / np.float32(255.0)
    if norm.mode == "mean_subtract":
        means = np.asarray(norm.channel_means, dtype=np.float32).reshape(3, 1, 1)
        chw = chw - means
    return np.ascontiguousarray(chw, dtype=np.float32)


@dataclass(frozen=True)
class Sample:
    path: str
    label: int


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered class names plus (path, label) pairs, labels indexing classes."""

    classes: list[str]
    samples: list[Sample] = field(default_factory=list)

    def __post_init__(self):
        if not self.classes:
            raise ManifestInvalid("class list is empty")
        seen: set[str] = set()
        for s in self.samples:
            if not isinstance(s.label, int) or not (0 <= s.label < len(self.classes)):
                raise ManifestInvalid(
                    f"label {s.label} out of range for {len(self.classes)} classes ({s.path})"
                )
            if s.path in seen:
                raise ManifestInvalid(f"duplicate path {s.path!r}")
            seen.add(s.path)

    def __len__(self) -> int:
        return len(self.samples)

    def labels(self) -> np.ndarray:
        return np.asarray([s.label for s in self.samples], dtype=np.int64)


def load_manifest(path: str) -> DatasetManifest:
    """Read and validate a JSON manifest file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ManifestParse(f"cannot parse manifest {path}: {exc}") from exc
    return manifest_from_json_dict(raw)


def manifest_from_json_dict(raw: object) -> DatasetManifest:
    if not isinstance(raw, dict):
        raise ManifestParse("manifest root must be a JSON object")
    classes = raw.get("classes")
    samples = raw.get("samples")
    if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
        raise ManifestParse('manifest "classes" must be a list of strings')
    if not isinstance(samples, list):
        raise ManifestParse('manifest "samples" must be a list')
    parsed = []
    for entry in samples:
        if (
            not isinstance(entry, dict)
            or not isinstance(entry.get("path"), str)
            or not isinstance(entry.get("label"), int)
            or isinstance(entry.get("label"), bool)
        ):
            raise ManifestParse(f"bad sample entry: {entry!r}")
        parsed.append(Sample(path=entry["path"], label=entry["label"]))
    return DatasetManifest(classes=list(classes), samples=parsed)


def save_manifest(manifest: DatasetManifest, path: str) -> None:
    doc = {
        "classes": manifest.classes,
        "samples": [{"path": s.path, "label": s.label} for s in manifest.samples],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
