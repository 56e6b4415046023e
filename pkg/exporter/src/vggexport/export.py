"""One-shot export of VGG16 convolutional weights to an FWB1 bundle.

The FWB1 container (written here independently of any consumer): magic
"FWB1", u32 LE header length, UTF-8 JSON header with keys "input"
({"c","h","w"}), "normalization" and "layers", then one tensor block per
conv weight and bias in layer order. A tensor block is u8 ndim, ndim x u32
LE dims, then float32 LE row-major values; no padding anywhere.

Only the five convolutional blocks are exported (13 conv layers); the
fully-connected head is dropped and a flatten layer is appended, so a
3x64x64 input yields a 2048-long feature vector. Torch stores conv weights
as (out, in, k, k) already, so no axis shuffling is needed; tensors are
converted to contiguous float32.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

FWB1_MAGIC = b"FWB1"

# torchvision's ImageNet channel means; the std-division part of the usual
# preprocessing is not expressible in the bundle format and is omitted,
# which is fine because consumers apply exactly the normalization embedded
# in the header.
IMAGENET_CHANNEL_MEANS = (0.485, 0.456, 0.406)

VGG16_CONV_PLAN = ((64, 64), (128, 128), (256, 256, 256), (512, 512, 512), (512, 512, 512))


class DownloadFailure(Exception):
    """Pretrained weights could not be fetched or read from cache."""


class LayoutMismatch(Exception):
    """The zoo model's structure is not the expected 13-conv VGG16."""


@dataclass(frozen=True)
class ExportJob:
    out_path: str
    input_size: int = 64
    channel_means: tuple[float, float, float] = IMAGENET_CHANNEL_MEANS
    cache_dir: str | None = None


def _fetch_pretrained(cache_dir: str | None):
    import torch
    from torchvision.models import VGG16_Weights, vgg16

    if cache_dir is not None:
        torch.hub.set_dir(cache_dir)
    try:
        return vgg16(weights=VGG16_Weights.IMAGENET1K_V1)
    except Exception as exc:  # urllib error types vary by failure mode
        raise DownloadFailure(f"cannot obtain pretrained VGG16 weights: {exc}") from exc


def _walk_features(model) -> list[tuple[str, object]]:
    """Flatten model.features into (kind, module) pairs."""
    import torch.nn as nn

    out = []
    for module in model.features:
        if isinstance(module, nn.Conv2d):
            out.append(("conv", module))
        elif isinstance(module, nn.ReLU):
            out.append(("relu", module))
        elif isinstance(module, nn.MaxPool2d):
            out.append(("pool", module))
        else:
            raise LayoutMismatch(f"unexpected module {type(module).__name__} in features")
    return out


def collect_conv_stack(model) -> list[dict]:
    """Validated layer descriptors with weights pulled out as numpy arrays."""
    stack = _walk_features(model)
    convs = [m for kind, m in stack if kind == "conv"]
    plan = [c for block in VGG16_CONV_PLAN for c in block]
    if len(convs) != len(plan):
        raise LayoutMismatch(f"expected {len(plan)} conv layers, found {len(convs)}")
    layers = []
    block, index_in_block = 1, 1
    for kind, module in stack:
        if kind == "conv":
            w = module.weight.detach().cpu().numpy()
            b = module.bias.detach().cpu().numpy()
            if w.shape[2:] != (3, 3) or module.stride != (1, 1) or module.padding != (1, 1):
                raise LayoutMismatch(f"conv {w.shape} is not 3x3 stride 1 pad 1")
            expected_out = VGG16_CONV_PLAN[block - 1][index_in_block - 1]
            if w.shape[0] != expected_out:
                raise LayoutMismatch(
                    f"block {block} conv {index_in_block}: {w.shape[0]} channels, "
                    f"expected {expected_out}"
                )
            name = f"block{block}_conv{index_in_block}"
            layers.append(
                {
                    "kind": "conv2d",
                    "out_channels": int(w.shape[0]),
                    "weight_array": np.ascontiguousarray(w, dtype=np.float32),
                    "bias_array": np.ascontiguousarray(b, dtype=np.float32),
                    "name": name,
                }
            )
            index_in_block += 1
        elif kind == "relu":
            layers.append({"kind": "relu"})
        else:
            layers.append({"kind": "maxpool2d"})
            block += 1
            index_in_block = 1
    return layers


def _write_tensor(fh, arr: np.ndarray) -> None:
    fh.write(struct.pack("<B", arr.ndim))
    for dim in arr.shape:
        fh.write(struct.pack("<I", dim))
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes(order="C"))


def write_bundle(layers: list[dict], job: ExportJob) -> None:
    header_layers = []
    tensors: list[np.ndarray] = []
    for layer in layers:
        if layer["kind"] == "conv2d":
            header_layers.append(
                {
                    "kind": "conv2d",
                    "out_channels": layer["out_channels"],
                    "kernel": 3,
                    "stride": 1,
                    "pad": 1,
                    "weight": layer["name"] + "_w",
                    "bias": layer["name"] + "_b",
                }
            )
            tensors.append(layer["weight_array"])
            tensors.append(layer["bias_array"])
        elif layer["kind"] == "relu":
            header_layers.append({"kind": "relu"})
        else:
            header_layers.append({"kind": "maxpool2d", "size": 2, "stride": 2})
    header_layers.append({"kind": "flatten"})
    header = {
        "input": {"c": 3, "h": job.input_size, "w": job.input_size},
        "normalization": {
            "mode": "mean_subtract",
            "channel_means": list(job.channel_means),
        },
        "layers": header_layers,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(job.out_path, "wb") as fh:
        fh.write(FWB1_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in tensors:
            _write_tensor(fh, arr)


def export_vgg16(job: ExportJob, model=None) -> None:
    """Write the job's FWB1 file; fetches pretrained weights unless a
    torchvision VGG model instance is supplied."""
    if model is None:
        model = _fetch_pretrained(job.cache_dir)
    model.eval()
    layers = collect_conv_stack(model)
    write_bundle(layers, job)
