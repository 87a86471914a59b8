"""Command-line entry point: ``vgg-export --image PATH --out DIR``."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .errors import ExportError
from .export import ExportJob, export_pyramid


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="vgg-export")
    parser.add_argument("--image", required=True, help="input image (any RGB-decodable format)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--weights", choices=("pretrained", "random"),
                        default="pretrained",
                        help="'random' uses seeded untrained weights (offline use)")
    parser.add_argument("--seed", type=int, default=0,
                        help="weight init seed when --weights random")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    job = ExportJob(image_path=args.image, output_dir=args.out,
                    device=args.device, weights=args.weights, seed=args.seed)
    try:
        manifest = export_pyramid(job)
    except (ExportError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
