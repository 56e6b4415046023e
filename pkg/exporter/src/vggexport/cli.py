"""Command line for the exporter: export-vgg16 --out vgg16_64.fwb [--cache DIR]."""

from __future__ import annotations

import argparse
import sys

from .export import DownloadFailure, ExportJob, LayoutMismatch, export_vgg16


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="export-vgg16",
        description="Export pretrained VGG16 conv weights to an FWB1 bundle",
    )
    parser.add_argument("--out", required=True, help="output .fwb path")
    parser.add_argument("--cache", default=None, help="torch hub cache directory")
    parser.add_argument("--input-size", type=int, default=64)
    parser.add_argument(
        "--random-init",
        action="store_true",
        help="export an untrained (randomly initialised) VGG16; useful offline",
    )
    parser.add_argument("--seed", type=int, default=0, help="seed for --random-init")
    args = parser.parse_args(argv)

    job = ExportJob(out_path=args.out, input_size=args.input_size, cache_dir=args.cache)
    model = None
    if args.random_init:
        import torch
        from torchvision.models import vgg16

        torch.manual_seed(args.seed)
        model = vgg16(weights=None)
    try:
        export_vgg16(job, model=model)
    except DownloadFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LayoutMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
