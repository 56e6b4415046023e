"""FMD1 model container: one file per trained model.

Layout: magic "FMD1", u32 LE header length, a UTF-8 JSON header, then raw
little-endian parameter blocks in exactly the order the header's "blocks"
list declares them. Block dtypes are f4 or f8; integer-valued structure
arrays (tree topology) are stored as f8, which is exact for the magnitudes
involved.
"""

from __future__ import annotations

import json

import numpy as np

from .. import binio
from ..errors import ModelFileParse
from .gbdt import GbdtModel, Tree
from .mlp import MlpModel
from .svm import BinaryMachine, KernelSpec, SvmModel

FMD1_MAGIC = b"FMD1"

_DTYPES = {"f4": "<f4", "f8": "<f8"}


def _write_container(path: str, header: dict, blocks: list[tuple[str, np.ndarray, str]]):
    header = dict(header)
    header["blocks"] = [
        {"name": name, "dtype": dtype, "shape": list(arr.shape)}
        for name, arr, dtype in blocks
    ]
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(FMD1_MAGIC)
        binio.write_u32(fh, len(blob))
        fh.write(blob)
        for _, arr, dtype in blocks:
            fh.write(np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes(order="C"))


def _read_container(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        with open(path, "rb") as fh:
            if binio.read_exact(fh, 4) != FMD1_MAGIC:
                raise ModelFileParse("bad magic")
            header_len = binio.read_u32(fh)
            header = json.loads(binio.read_exact(fh, header_len).decode("utf-8"))
            arrays = {}
            for block in header["blocks"]:
                dtype = _DTYPES[block["dtype"]]
                count = int(np.prod(block["shape"])) if block["shape"] else 1
                data = binio.read_exact(fh, count * np.dtype(dtype).itemsize)
                arrays[block["name"]] = (
                    np.frombuffer(data, dtype=dtype).reshape(block["shape"]).copy()
                )
    except binio.TruncatedFile as exc:
        raise ModelFileParse(f"truncated model file: {exc}") from exc
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ModelFileParse(f"cannot parse model file {path}: {exc}") from exc
    return header, arrays


def save_model(model, path: str) -> None:
    if isinstance(model, SvmModel):
        _save_svm(model, path)
    elif isinstance(model, GbdtModel):
        _save_gbdt(model, path)
    elif isinstance(model, MlpModel):
        _save_mlp(model, path)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")


def load_model(path: str):
    header, arrays = _read_container(path)
    kind = header.get("kind")
    if kind == "svm":
        return _load_svm(header, arrays)
    if kind == "gbdt":
        return _load_gbdt(header, arrays)
    if kind == "mlp":
        return _load_mlp(header, arrays)
    raise ModelFileParse(f"unknown model kind {kind!r}")


# --- svm ---

def _save_svm(model: SvmModel, path: str) -> None:
    header = {
        "kind": "svm",
        "hyperparameters": {
            "C": model.C,
            "kernel": model.kernel.to_json_dict(),
        },
        "classes": list(model.classes),
        "n_features": model.n_features,
        "seed": model.seed,
    }
    blocks = []
    for i, machine in enumerate(model.machines):
        blocks.append((f"machine{i}_sv", machine.support_vectors, "f8"))
        blocks.append((f"machine{i}_coef", machine.dual_coef, "f8"))
        blocks.append((f"machine{i}_bias", np.asarray([machine.bias]), "f8"))
    _write_container(path, header, blocks)


def _load_svm(header: dict, arrays: dict) -> SvmModel:
    classes = tuple(int(c) for c in header["classes"])
    machines = []
    for i in range(len(classes)):
        machines.append(
            BinaryMachine(
                support_vectors=arrays[f"machine{i}_sv"],
                dual_coef=arrays[f"machine{i}_coef"],
                bias=float(arrays[f"machine{i}_bias"][0]),
            )
        )
    hp = header["hyperparameters"]
    return SvmModel(
        classes=classes,
        machines=tuple(machines),
        C=float(hp["C"]),
        kernel=KernelSpec.from_json_dict(hp["kernel"]),
        n_features=int(header["n_features"]),
        seed=int(header.get("seed", 0)),
    )


# --- gbdt ---

def _save_gbdt(model: GbdtModel, path: str) -> None:
    trees = [tree for round_trees in model.rounds for tree in round_trees]
    header = {
        "kind": "gbdt",
        "hyperparameters": {
            "rounds": len(model.rounds),
            "learning_rate": model.learning_rate,
            "max_depth": model.max_depth,
            "lambda": model.reg_lambda,
            "gamma": model.gamma,
            "base_score": model.base_score,
        },
        "n_classes": model.n_classes,
        "n_features": model.n_features,
        "seed": model.seed,
        "loss_history": list(model.loss_history),
    }
    counts = np.asarray([t.n_nodes for t in trees], dtype=np.float64)

    def cat(attr):
        if not trees:
            return np.zeros(0, dtype=np.float64)
        return np.concatenate([getattr(t, attr).astype(np.float64) for t in trees])

    blocks = [
        ("node_counts", counts, "f8"),
        ("feature", cat("feature"), "f8"),
        ("threshold", cat("threshold"), "f8"),
        ("left", cat("left"), "f8"),
        ("right", cat("right"), "f8"),
        ("value", cat("value"), "f8"),
    ]
    _write_container(path, header, blocks)


def _load_gbdt(header: dict, arrays: dict) -> GbdtModel:
    hp = header["hyperparameters"]
    k = int(header["n_classes"])
    counts = arrays["node_counts"].astype(np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    trees = []
    for t in range(len(counts)):
        lo, hi = offsets[t], offsets[t + 1]
        trees.append(
            Tree(
                feature=arrays["feature"][lo:hi].astype(np.int64),
                threshold=arrays["threshold"][lo:hi],
                left=arrays["left"][lo:hi].astype(np.int64),
                right=arrays["right"][lo:hi].astype(np.int64),
                value=arrays["value"][lo:hi],
            )
        )
    n_rounds = int(hp["rounds"])
    if n_rounds and len(trees) != n_rounds * k:
        raise ModelFileParse("tree count does not match rounds * classes")
    grouped = tuple(
        tuple(trees[r * k : (r + 1) * k]) for r in range(n_rounds)
    )
    return GbdtModel(
        n_classes=k,
        rounds=grouped,
        learning_rate=float(hp["learning_rate"]),
        max_depth=int(hp["max_depth"]),
        reg_lambda=float(hp["lambda"]),
        gamma=float(hp["gamma"]),
        base_score=float(hp["base_score"]),
        n_features=int(header["n_features"]),
        seed=int(header.get("seed", 0)),
        loss_history=tuple(header.get("loss_history", ())),
    )


# --- mlp ---

def _save_mlp(model: MlpModel, path: str) -> None:
    header = {
        "kind": "mlp",
        "hyperparameters": dict(model.train_config),
        "layer_sizes": list(model.layer_sizes),
        "dropout": list(model.dropout),
        "output_mode": model.output_mode,
        "n_classes": model.n_classes,
        "seed": int(model.train_config.get("seed", 0)),
    }
    blocks = []
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        blocks.append((f"w{i}", w, "f8"))
        blocks.append((f"b{i}", b, "f8"))
    _write_container(path, header, blocks)


def _load_mlp(header: dict, arrays: dict) -> MlpModel:
    sizes = tuple(int(s) for s in header["layer_sizes"])
    return MlpModel(
        layer_sizes=sizes,
        weights=[arrays[f"w{i}"] for i in range(len(sizes) - 1)],
        biases=[arrays[f"b{i}"] for i in range(len(sizes) - 1)],
        dropout=tuple(header["dropout"]),
        output_mode=str(header["output_mode"]),
        n_classes=int(header["n_classes"]),
        train_config=dict(header.get("hyperparameters", {})),
    )
