"""Command-line interface.

Exit codes: 0 success, 2 config or file parse error, 3 data validation
error, 4 numerical failure (NaN/Inf detected).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .augment import augment_dataset
from .cluster import k_sweep
from .convnet import load_weight_bundle, save_weight_bundle, tiny_bundle, vgg16_64_bundle
from .errors import NumericalFailure, ParseError, ValidationError
from .features import extract_features, load_features, save_features
from .images import NormalizationSpec, load_manifest, save_manifest
from .learners import load_model, save_model
from .pipeline import (
    SplitSpec,
    accuracy,
    load_experiment_config,
    run_experiment,
    train_test_split,
)
from .synth import apply_label_noise, write_texture_corpus


def _cmd_ingest(args) -> int:
    manifest = load_manifest(args.manifest)
    bundle = load_weight_bundle(args.weights)
    norm = None
    if args.norm == "unit":
        norm = NormalizationSpec()
    elif args.norm == "mean":
        if bundle.normalization.mode != "mean_subtract":
            raise ValidationError("bundle carries no channel means for --norm mean")
        norm = bundle.normalization
    fm = extract_features(
        manifest,
        bundle,
        norm=norm,
        base_dir=os.path.dirname(os.path.abspath(args.manifest)),
        source=args.manifest,
    )
    save_features(fm, args.out)
    print(f"wrote {fm.n}x{fm.d} features to {args.out}")
    return 0


def _cmd_augment(args) -> int:
    manifest = load_manifest(args.manifest)
    out = augment_dataset(
        manifest,
        args.out,
        seed=args.seed,
        base_dir=os.path.dirname(os.path.abspath(args.manifest)),
    )
    manifest_path = os.path.join(args.out, "manifest.json")
    save_manifest(out, manifest_path)
    print(f"wrote {len(out)} augmented images and {manifest_path}")
    return 0


def _cmd_cluster_sweep(args) -> int:
    fm = load_features(args.features)
    report = k_sweep(fm, k_min=args.kmin, k_max=args.kmax, seed=args.seed)
    doc = {"per_k": {str(k): v for k, v in report.per_k.items()}, "best_k": report.best_k}
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(f"best_k={report.best_k} (report in {args.out})")
    return 0


def _cmd_train(args) -> int:
    from .learners import KernelSpec, gbdt_train, mlp_train, scale_sigma, svm_train

    fm = load_features(args.features)
    k = len(fm.classes) if fm.classes else int(fm.labels.max()) + 1
    if args.model == "svm":
        sigma = args.sigma if args.sigma is not None else scale_sigma(fm.values)
        kernel = (
            KernelSpec("linear") if args.kernel == "linear" else KernelSpec("rbf", sigma=sigma)
        )
        model = svm_train(fm.values, fm.labels, C=args.c, kernel=kernel, seed=args.seed)
    elif args.model == "gbdt":
        model = gbdt_train(
            fm.values,
            fm.labels,
            rounds=args.rounds,
            learning_rate=args.learning_rate,
            max_depth=args.depth,
            seed=args.seed,
            n_classes=k,
        )
    else:
        out_dim = k if args.output_mode == "softmax" else 1
        model = mlp_train(
            fm.values,
            fm.labels,
            arch=(fm.d, args.hidden1, args.hidden2, out_dim),
            dropout=(args.dropout, args.dropout),
            epochs=args.epochs,
            batch=args.batch,
            lr=args.lr,
            seed=args.seed,
            output_mode=args.output_mode,
            n_classes=k,
        )
    save_model(model, args.out)
    print(f"trained {args.model} on {fm.n} rows; saved to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    fm = load_features(args.features)
    model = load_model(args.model)
    _, test = train_test_split(fm, SplitSpec(test_fraction=args.split, seed=args.seed))
    acc = accuracy(model.predict(test.values), test.labels)
    print(json.dumps({"test_rows": test.n, "accuracy": acc}))
    return 0


def _cmd_experiment(args) -> int:
    config = load_experiment_config(args.config)
    report = run_experiment(config, base_dir=os.path.dirname(os.path.abspath(args.config)))
    report.save(args.out)
    for variant, row in report.to_json_dict()["grid"].items():
        cells = "  ".join(f"{clf}={acc:.4f}" for clf, acc in row.items())
        print(f"{variant:>10}: {cells}")
    print(f"report written to {args.out}")
    return 0


def _cmd_make_bundle(args) -> int:
    builder = tiny_bundle if args.preset == "tiny" else vgg16_64_bundle
    bundle = builder(seed=args.seed)
    save_weight_bundle(bundle, args.out)
    shape = "x".join(str(d) for d in bundle.input_shape)
    print(f"wrote {args.preset} bundle ({shape} -> {bundle.feature_dim}) to {args.out}")
    return 0


def _cmd_synth_corpus(args) -> int:
    manifest = write_texture_corpus(
        args.out,
        n_classes=args.classes,
        per_class=args.per_class,
        size=args.size,
        seed=args.seed,
    )
    if args.label_noise > 0.0:
        noisy = apply_label_noise(manifest, args.label_noise, seed=args.seed)
        save_manifest(noisy, os.path.join(args.out, "manifest_noisy.json"))
    save_manifest(manifest, os.path.join(args.out, "manifest.json"))
    print(f"wrote {len(manifest)} images to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foodid", description="Food photo classification pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="extract convnet features from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weights", required=True, help="FWB1 weight bundle")
    p.add_argument("--norm", choices=["unit", "mean"], default=None)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("augment", help="write 32 variants per manifest image")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("cluster-sweep", help="silhouette scores across k")
    p.add_argument("--features", required=True)
    p.add_argument("--kmin", type=int, default=4)
    p.add_argument("--kmax", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_cluster_sweep)

    p = sub.add_parser("train", help="train one classifier on a feature file")
    p.add_argument("--features", required=True)
    p.add_argument("--model", choices=["svm", "gbdt", "mlp"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--c", type=float, default=10.0, help="svm C")
    p.add_argument("--kernel", choices=["linear", "rbf"], default="rbf")
    p.add_argument("--sigma", type=float, default=None, help="rbf sigma")
    p.add_argument("--rounds", type=int, default=100, help="gbdt rounds")
    p.add_argument("--learning-rate", type=float, default=0.1, help="gbdt eta")
    p.add_argument("--depth", type=int, default=4, help="gbdt max depth")
    p.add_argument("--epochs", type=int, default=50, help="mlp epochs")
    p.add_argument("--batch", type=int, default=32, help="mlp batch size")
    p.add_argument("--lr", type=float, default=0.1, help="mlp learning rate")
    p.add_argument("--dropout", type=float, default=0.5, help="mlp dropout rate")
    p.add_argument("--hidden1", type=int, default=512)
    p.add_argument("--hidden2", type=int, default=128)
    p.add_argument("--output-mode", choices=["softmax", "relu_regression"],
                   default="softmax")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="accuracy of a saved model on a split")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("experiment", help="run the 3x3 dataset/classifier grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("make-bundle", help="write a random-weight preset bundle")
    p.add_argument("--preset", choices=["tiny", "vgg16-64"], default="vgg16-64")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_make_bundle)

    p = sub.add_parser("synth-corpus", help="generate a synthetic texture corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=30)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label-noise", type=float, default=0.0)
    p.set_defaults(func=_cmd_synth_corpus)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
