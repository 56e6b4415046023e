"""Feed-forward convolutional inference engine.

The layer vocabulary is deliberately small: 3x3 stride-1 same-padded
convolutions, ReLU, 2x2 max-pooling, and a final flatten. That is exactly
what a VGG-style feature extractor needs, and it keeps shape checking
total: a WeightBundle is validated layer by layer at load time, so forward
passes cannot fail halfway through on well-formed inputs.

Convolutions run as im2col + matmul with float64 accumulation and are cast
back to float32, which bounds drift across deep stacks.

Weight bundles live in the FWB1 container: magic "FWB1", a u32 LE header
length, a UTF-8 JSON header {"input": {"c", "h", "w"}, "normalization",
"layers"}, then one tensor block per conv layer weight and bias in layer
order (u8 ndim, ndim x u32 LE dims, f32 LE row-major values, no padding).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import binio
from .errors import BundleParse, BundleShapeInvalid, ShapeMismatch
from .images import NormalizationSpec

FWB1_MAGIC = b"FWB1"


# --- layer specs ---

@dataclass(frozen=True)
class Conv2dSpec:
    out_channels: int
    weight: str
    bias: str
    kernel: int = 3
    stride: int = 1
    pad: int = 1
    kind: str = field(default="conv2d", init=False)


@dataclass(frozen=True)
class ReluSpec:
    kind: str = field(default="relu", init=False)


@dataclass(frozen=True)
class MaxPool2dSpec:
    size: int = 2
    stride: int = 2
    kind: str = field(default="maxpool2d", init=False)


@dataclass(frozen=True)
class FlattenSpec:
    kind: str = field(default="flatten", init=False)


LayerSpec = Conv2dSpec | ReluSpec | MaxPool2dSpec | FlattenSpec


def layer_to_json_dict(layer: LayerSpec) -> dict:
    if isinstance(layer, Conv2dSpec):
        return {
            "kind": "conv2d",
            "out_channels": layer.out_channels,
            "kernel": layer.kernel,
            "stride": layer.stride,
            "pad": layer.pad,
            "weight": layer.weight,
            "bias": layer.bias,
        }
    if isinstance(layer, MaxPool2dSpec):
        return {"kind": "maxpool2d", "size": layer.size, "stride": layer.stride}
    return {"kind": layer.kind}


def layer_from_json_dict(d: dict) -> LayerSpec:
    kind = d.get("kind")
    if kind == "conv2d":
        return Conv2dSpec(
            out_channels=int(d["out_channels"]),
            kernel=int(d.get("kernel", 3)),
            stride=int(d.get("stride", 1)),
            pad=int(d.get("pad", 1)),
            weight=str(d["weight"]),
            bias=str(d["bias"]),
        )
    if kind == "relu":
        return ReluSpec()
    if kind == "maxpool2d":
        return MaxPool2dSpec(size=int(d.get("size", 2)), stride=int(d.get("stride", 2)))
    if kind == "flatten":
        return FlattenSpec()
    raise BundleParse(f"unknown layer kind {kind!r}")


# --- primitive forward ops ---

def conv2d_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1, pad: int = 1
) -> np.ndarray:
    """Cross-correlation of (C,H,W) input with (O,C,k,k) filters, zero padding."""
    if x.ndim != 3 or w.ndim != 4 or b.ndim != 1:
        raise ShapeMismatch(f"conv2d ranks: x{x.shape} w{w.shape} b{b.shape}")
    c, h, width = x.shape
    o, ci, k, k2 = w.shape
    if ci != c or k != k2 or b.shape[0] != o:
        raise ShapeMismatch(f"conv2d shapes inconsistent: x{x.shape} w{w.shape} b{b.shape}")
    out_h = (h + 2 * pad - k) // stride + 1
    out_w = (width + 2 * pad - k) // stride + 1
    if out_h < 1 or out_w < 1:
        raise ShapeMismatch(f"conv2d output would be empty for input {x.shape}")

    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    sc, sh, sw = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(c, k, k, out_h, out_w),
        strides=(sc, sh, sw, stride * sh, stride * sw),
        writeable=False,
    )
    cols = windows.reshape(c * k * k, out_h * out_w).astype(np.float64)
    wmat = w.reshape(o, c * k * k).astype(np.float64)
    out = wmat @ cols + b.astype(np.float64)[:, None]
    return out.reshape(o, out_h, out_w).astype(np.float32)


def maxpool2d_forward(x: np.ndarray, size: int = 2, stride: int = 2) -> np.ndarray:
    """Non-overlapping max pooling; spatial dims must divide the stride."""
    if size != stride:
        raise ShapeMismatch("only non-overlapping pooling (size == stride) is supported")
    c, h, w = x.shape
    if h % stride or w % stride:
        raise ShapeMismatch(f"maxpool needs dims divisible by {stride}, got {h}x{w}")
    return x.reshape(c, h // stride, stride, w // stride, stride).max(axis=(2, 4))


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


# --- weight bundles ---

@dataclass(frozen=True)
class WeightBundle:
    """Immutable layer sequence plus its named tensors and input contract."""

    layers: tuple[LayerSpec, ...]
    tensors: dict[str, np.ndarray]
    input_shape: tuple[int, int, int]  # (channels, height, width)
    normalization: NormalizationSpec = NormalizationSpec()

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        # validates the whole chain, raising BundleShapeInvalid on problems
        object.__setattr__(self, "_shapes", _propagate_shapes(self))

    @property
    def activation_shapes(self) -> list[tuple[int, ...]]:
        """Output shape after each layer, starting with the input shape."""
        return list(self._shapes)  # type: ignore[attr-defined]

    @property
    def feature_dim(self) -> int:
        return int(np.prod(self.activation_shapes[-1]))

    def equals(self, other: "WeightBundle") -> bool:
        return (
            self.layers == other.layers
            and self.input_shape == other.input_shape
            and self.normalization == other.normalization
            and set(self.tensors) == set(other.tensors)
            and all(np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors)
        )


def _propagate_shapes(bundle: WeightBundle) -> tuple[tuple[int, ...], ...]:
    shapes: list[tuple[int, ...]] = [tuple(bundle.input_shape)]
    if len(bundle.input_shape) != 3 or any(d < 1 for d in bundle.input_shape):
        raise BundleShapeInvalid(f"bad input shape {bundle.input_shape}")
    flatten_seen = False
    cur = tuple(bundle.input_shape)
    for idx, layer in enumerate(bundle.layers):
        if flatten_seen:
            raise BundleShapeInvalid(f"layer {idx}: flatten must be the final layer")
        if isinstance(layer, Conv2dSpec):
            if layer.kernel % 2 == 0:
                raise BundleShapeInvalid(f"layer {idx}: kernel must be odd")
            if layer.pad != (layer.kernel - 1) // 2:
                raise BundleShapeInvalid(f"layer {idx}: pad must be (kernel-1)/2")
            for name in (layer.weight, layer.bias):
                if name not in bundle.tensors:
                    raise BundleShapeInvalid(f"layer {idx}: missing tensor {name!r}")
            w = bundle.tensors[layer.weight]
            b = bundle.tensors[layer.bias]
            expected_w = (layer.out_channels, cur[0], layer.kernel, layer.kernel)
            if tuple(w.shape) != expected_w:
                raise BundleShapeInvalid(
                    f"layer {idx}: weight shape {tuple(w.shape)} != {expected_w}"
                )
            if tuple(b.shape) != (layer.out_channels,):
                raise BundleShapeInvalid(
                    f"layer {idx}: bias shape {tuple(b.shape)} != ({layer.out_channels},)"
                )
            out_h = (cur[1] + 2 * layer.pad - layer.kernel) // layer.stride + 1
            out_w = (cur[2] + 2 * layer.pad - layer.kernel) // layer.stride + 1
            if out_h < 1 or out_w < 1:
                raise BundleShapeInvalid(f"layer {idx}: empty output {out_h}x{out_w}")
            cur = (layer.out_channels, out_h, out_w)
        elif isinstance(layer, ReluSpec):
            pass
        elif isinstance(layer, MaxPool2dSpec):
            if len(cur) != 3 or cur[1] % layer.stride or cur[2] % layer.stride:
                raise BundleShapeInvalid(
                    f"layer {idx}: maxpool needs dims divisible by {layer.stride}, got {cur}"
                )
            cur = (cur[0], cur[1] // layer.stride, cur[2] // layer.stride)
        elif isinstance(layer, FlattenSpec):
            cur = (int(np.prod(cur)),)
            flatten_seen = True
        else:
            raise BundleShapeInvalid(f"layer {idx}: unknown layer {layer!r}")
        shapes.append(cur)
    if not flatten_seen:
        raise BundleShapeInvalid("bundle must end with exactly one flatten layer")
    return tuple(shapes)


def forward(bundle: WeightBundle, x: np.ndarray) -> np.ndarray:
    """Run the bundle on one (C,H,W) input, returning the flat feature vector."""
    if tuple(x.shape) != tuple(bundle.input_shape):
        raise ShapeMismatch(
            f"input shape {tuple(x.shape)} != bundle input {tuple(bundle.input_shape)}"
        )
    out = np.asarray(x, dtype=np.float32)
    for idx, layer in enumerate(bundle.layers):
        try:
            if isinstance(layer, Conv2dSpec):
                out = conv2d_forward(
                    out,
                    bundle.tensors[layer.weight],
                    bundle.tensors[layer.bias],
                    stride=layer.stride,
                    pad=layer.pad,
                )
            elif isinstance(layer, ReluSpec):
                out = relu_forward(out)
            elif isinstance(layer, MaxPool2dSpec):
                out = maxpool2d_forward(out, layer.size, layer.stride)
            else:
                out = out.reshape(-1)
        except ShapeMismatch as exc:
            raise ShapeMismatch(f"layer {idx}: {exc}") from exc
    return out


# --- FWB1 container ---

def _tensor_order(layers: tuple[LayerSpec, ...]) -> list[str]:
    names: list[str] = []
    for layer in layers:
        if isinstance(layer, Conv2dSpec):
            names.append(layer.weight)
            names.append(layer.bias)
    return names


def save_weight_bundle(bundle: WeightBundle, path: str) -> None:
    header = {
        "input": {
            "c": bundle.input_shape[0],
            "h": bundle.input_shape[1],
            "w": bundle.input_shape[2],
        },
        "normalization": bundle.normalization.to_json_dict(),
        "layers": [layer_to_json_dict(l) for l in bundle.layers],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(FWB1_MAGIC)
        binio.write_u32(fh, len(blob))
        fh.write(blob)
        for name in _tensor_order(bundle.layers):
            binio.write_tensor(fh, bundle.tensors[name], "<f4")


def load_weight_bundle(path: str) -> WeightBundle:
    """Parse and fully validate an FWB1 file (shape chain checked here)."""
    try:
        with open(path, "rb") as fh:
            magic = binio.read_exact(fh, 4)
            if magic != FWB1_MAGIC:
                raise BundleParse(f"bad magic {magic!r}")
            header_len = binio.read_u32(fh)
            try:
                header = json.loads(binio.read_exact(fh, header_len).decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise BundleParse(f"bad header JSON: {exc}") from exc
            layers = tuple(layer_from_json_dict(d) for d in header["layers"])
            tensors = {}
            for name in _tensor_order(layers):
                if name in tensors:
                    raise BundleParse(f"tensor {name!r} declared twice")
                tensors[name] = binio.read_tensor(fh, "<f4")
            trailing = fh.read(1)
            if trailing:
                raise BundleParse("trailing bytes after final tensor")
            inp = header["input"]
            input_shape = (int(inp["c"]), int(inp["h"]), int(inp["w"]))
            norm = NormalizationSpec.from_json_dict(header.get("normalization", {}))
    except binio.TruncatedFile as exc:
        raise BundleParse(f"truncated file: {exc}") from exc
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise BundleParse(f"cannot parse bundle {path}: {exc}") from exc
    for name, arr in tensors.items():
        if not np.all(np.isfinite(arr)):
            raise BundleShapeInvalid(f"tensor {name!r} holds non-finite values")
    return WeightBundle(
        layers=layers, tensors=tensors, input_shape=input_shape, normalization=norm
    )


# --- presets ---

VGG16_CHANNEL_PLAN = (
    (64, 64),
    (128, 128),
    (256, 256, 256),
    (512, 512, 512),
    (512, 512, 512),
)


def _conv_stack(
    channel_plan, in_channels: int, rng: np.random.Generator
) -> tuple[list[LayerSpec], dict[str, np.ndarray]]:
    layers: list[LayerSpec] = []
    tensors: dict[str, np.ndarray] = {}
    c_in = in_channels
    for bi, block in enumerate(channel_plan, start=1):
        for ci, c_out in enumerate(block, start=1):
            wname = f"block{bi}_conv{ci}_w"
            bname = f"block{bi}_conv{ci}_b"
            # He scaling keeps activation magnitudes stable through deep stacks
            std = np.sqrt(2.0 / (c_in * 9))
            tensors[wname] = (rng.standard_normal((c_out, c_in, 3, 3)) * std).astype(
                np.float32
            )
            tensors[bname] = np.zeros(c_out, dtype=np.float32)
            layers.append(Conv2dSpec(out_channels=c_out, weight=wname, bias=bname))
            layers.append(ReluSpec())
            c_in = c_out
        layers.append(MaxPool2dSpec())
    layers.append(FlattenSpec())
    return layers, tensors


def vgg16_64_bundle(
    seed: int = 0, normalization: NormalizationSpec | None = None
) -> WeightBundle:
    """VGG16-shaped 13-conv bundle for 3x64x64 inputs; 2048-dim features.

    Weights are seeded-random He-scaled draws: the shape contract of the
    real network without depending on exported pretrained weights.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    layers, tensors = _conv_stack(VGG16_CHANNEL_PLAN, 3, rng)
    return WeightBundle(
        layers=tuple(layers),
        tensors=tensors,
        input_shape=(3, 64, 64),
        normalization=normalization or NormalizationSpec(),
    )


def tiny_bundle(
    seed: int = 0, normalization: NormalizationSpec | None = None
) -> WeightBundle:
    """Two-block toy network: 3x16x16 input -> 128-dim features."""
    rng = np.random.Generator(np.random.PCG64(seed))
    layers, tensors = _conv_stack(((16,), (8,)), 3, rng)
    return WeightBundle(
        layers=tuple(layers),
        tensors=tensors,
        input_shape=(3, 16, 16),
        normalization=normalization or NormalizationSpec(),
    )
