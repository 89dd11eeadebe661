"""Command-line export of image-dataset embeddings into MSCE files.

Exit codes: 0 success, 1 usage error, 2 when the backbone or dataset
cannot be obtained.
"""

import argparse
import sys

from .backbone import BackboneError
from .extract import DATASETS, DatasetError, ExtractionSpec, extract


def build_parser():
    parser = argparse.ArgumentParser(
        prog="msce-extract",
        description="Export image-dataset embeddings from a pretrained "
                    "vision transformer into the MSCE container.")
    parser.add_argument("--dataset", required=True,
                        help=f"one of {', '.join(DATASETS)}")
    parser.add_argument("--split", default="train", choices=("train", "test"))
    parser.add_argument("--backbone", default="dino_vitb16",
                        help="hub backbone name or TorchScript file path")
    parser.add_argument("--views", type=int, default=2,
                        help="augmented views per image (>= 1)")
    parser.add_argument("--batch-size", type=int, default=256)
    parser.add_argument("--out", required=True, help="output .msce path")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--data-root", default="./data")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--no-augment", action="store_true",
                        help="deterministic center-crop views only")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        spec = ExtractionSpec(
            dataset=args.dataset, split=args.split, backbone=args.backbone,
            views=args.views, batch_size=args.batch_size, out=args.out,
            seed=args.seed, data_root=args.data_root, device=args.device,
            stochastic=not args.no_augment)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    try:
        path = extract(spec)
    except (BackboneError, DatasetError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
