"""Command-line front end.

Subcommands: ``match`` (one image pair), ``eval-mma`` and ``eval-homography``
(dataset evaluation), ``viz`` (static SVG overlay).  Exit codes: 0 success,
1 usage error, 2 runtime error.  All randomness flows from --seed (default
0); outputs are written atomically (temp file + rename).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from typing import Sequence

from . import evaluation
from .core import atomic_write_text, load_image, read_matches, write_matches
from .errors import MatchingError
from .extractor import ExtractorConfig
from .geometry import MsacParams
from .pipeline import PipelineConfig, dfm_match
from .rng import derive_seed
from .viz import render_match_svg

log = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so usage errors exit 1."""

    def error(self, message):
        raise UsageError(message)


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variant", choices=("s1", "s0_s1"), default="s0_s1")
    p.add_argument("--ratio", choices=("0.6", "0.9"), default="0.9",
                   help="shallowest-layer ratio threshold naming the schedule")
    p.add_argument("--extractor", choices=("builtin", "tensor_files"),
                   default="builtin")
    p.add_argument("--export-command", default=None,
                   help="shell template with {image} and {out_dir} used to "
                        "export pyramids for warped intermediates")
    p.add_argument("--seed", type=int, default=0)


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    schedule = "r06" if args.ratio == "0.6" else "r09"
    extractor = ExtractorConfig(
        backend=args.extractor,
        builtin_seed=args.seed if args.seed else 1,
        export_command=getattr(args, "export_command", None),
    )
    return PipelineConfig(
        variant=args.variant,
        schedule_name=schedule,
        extractor=extractor,
        msac=MsacParams(seed=args.seed),
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="deepmatch")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="match one image pair")
    p.add_argument("--image-a", required=True)
    p.add_argument("--image-b", required=True)
    p.add_argument("--manifest-a", default=None)
    p.add_argument("--manifest-b", default=None)
    p.add_argument("--out", required=True, help="output match file")
    p.add_argument("--diagnostics", default=None,
                   help="diagnostics JSON path (default: OUT.json)")
    _add_pipeline_flags(p)

    for mode in ("mma", "homography"):
        p = sub.add_parser(f"eval-{mode}", help=f"dataset {mode} evaluation")
        p.add_argument("--dataset", required=True)
        p.add_argument("--report", required=True, help="output JSON report")
        if mode == "homography":
            p.add_argument("--runs", type=int, default=10)
        _add_pipeline_flags(p)

    p = sub.add_parser("viz", help="render a match overlay SVG")
    p.add_argument("--image-a", required=True)
    p.add_argument("--image-b", required=True)
    p.add_argument("--matches", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-lines", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)

    return parser


def _cmd_match(args: argparse.Namespace) -> int:
    if args.extractor == "tensor_files" and not (args.manifest_a and args.manifest_b):
        raise UsageError("--manifest-a/--manifest-b are required with "
                         "--extractor tensor_files")
    config = _pipeline_config(args)
    image_a = load_image(args.image_a)
    image_b = load_image(args.image_b)
    result = dfm_match(image_a, image_b, config,
                       manifest_a=args.manifest_a, manifest_b=args.manifest_b)
    write_matches(args.out, result.matches)
    diag_path = args.diagnostics or args.out + ".json"
    atomic_write_text(diag_path,
                      json.dumps(result.diagnostics, sort_keys=True, indent=2) + "\n")
    print(len(result.matches))
    return 0


def _run_pair(pair: evaluation.SequencePair, config: PipelineConfig,
              pair_seed: int):
    cfg = replace(config, msac=replace(config.msac, seed=pair_seed))
    image_a = load_image(pair.reference_path)
    image_b = load_image(pair.target_path)
    return dfm_match(image_a, image_b, cfg)


def _cmd_eval(args: argparse.Namespace, mode: str) -> int:
    config = _pipeline_config(args)
    pairs = evaluation.load_dataset(args.dataset)
    header = {
        "mode": mode,
        "dataset": os.path.basename(os.path.abspath(args.dataset)),
        "variant": args.variant,
        "schedule": config.schedule_name,
        "seed": args.seed,
    }
    if mode == "mma":
        per_pair = []
        for idx, pair in enumerate(pairs):
            result = _run_pair(pair, config, derive_seed(args.seed, idx))
            curve = evaluation.mma(result.matches, pair.h_gt)
            per_pair.append((pair, curve, len(result.matches)))
        report = {**header, **evaluation.dataset_mma(per_pair)}
        report["curves"] = {
            split: {str(t): v for t, v in curve.items()}
            for split, curve in report["curves"].items()
        }
    else:
        cache: dict[int, list] = {}

        def matcher(pair, _pairs=pairs):
            idx = _pairs.index(pair)
            if idx not in cache:
                cache[idx] = _run_pair(pair, config, derive_seed(args.seed, idx)).matches
            return cache[idx]

        stats = evaluation.homography_accuracy(
            pairs, matcher, runs=args.runs, msac=config.msac, base_seed=args.seed,
        )
        stats["thresholds"] = {str(t): v for t, v in stats["thresholds"].items()}
        report = {**header, **stats}

    atomic_write_text(args.report, json.dumps(report, sort_keys=True, indent=2) + "\n")
    return 0


def _cmd_viz(args: argparse.Namespace) -> int:
    image_a = load_image(args.image_a)
    image_b = load_image(args.image_b)
    matches = read_matches(args.matches)
    svg = render_match_svg(image_a, image_b, matches,
                           max_lines=args.max_lines, seed=args.seed)
    atomic_write_text(args.out, svg + "\n")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("DFM_LOG", "WARNING").upper())
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        if args.command == "match":
            return _cmd_match(args)
        if args.command == "eval-mma":
            return _cmd_eval(args, "mma")
        if args.command == "eval-homography":
            return _cmd_eval(args, "homography")
        if args.command == "viz":
            return _cmd_viz(args)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (MatchingError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
