"""Benchmark harness: dataset ingestion, matching accuracy, homography accuracy.

Datasets follow the common planar-benchmark layout: one directory per
sequence, named with an ``i_`` (illumination) or ``v_`` (viewpoint) prefix,
holding images 1..6 and ground-truth homography files H_1_2 .. H_1_6 mapping
image 1's pixels onto image k's.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import Homography, PixelMatch, load_image, read_homography_file
from .errors import MalformedSequence, MatchingError
from .geometry import MsacParams, corner_error, msac_homography
from .rng import derive_seed

log = logging.getLogger(__name__)

MMA_THRESHOLDS = tuple(range(1, 11))
HOMOGRAPHY_THRESHOLDS = (1, 3, 5)
_IMAGE_EXTENSIONS = (".ppm", ".png", ".pgm")


@dataclass(frozen=True)
class SequencePair:
    """One reference/target pair of a sequence with its ground-truth H."""

    sequence_id: str
    kind: str                # "illumination" or "viewpoint"
    target_index: int        # 2..6
    reference_path: str
    target_path: str
    h_gt: Homography         # reference -> target


def _find_image(seq_dir: str, index: int) -> str:
    for ext in _IMAGE_EXTENSIONS:
        path = os.path.join(seq_dir, f"{index}{ext}")
        if os.path.exists(path):
            return path
    raise MalformedSequence(f"{seq_dir}: missing image {index}")


def load_dataset(root_dir: str) -> list[SequencePair]:
    """Scan a dataset root; 5 pairs per sequence, kind from the i_/v_ prefix."""
    pairs: list[SequencePair] = []
    for name in sorted(os.listdir(root_dir)):
        seq_dir = os.path.join(root_dir, name)
        if not os.path.isdir(seq_dir) or not name[:2] in ("i_", "v_"):
            continue
        kind = "illumination" if name.startswith("i_") else "viewpoint"
        reference = _find_image(seq_dir, 1)
        for k in range(2, 7):
            target = _find_image(seq_dir, k)
            h_path = os.path.join(seq_dir, f"H_1_{k}")
            if not os.path.exists(h_path):
                raise MalformedSequence(f"{name}: missing homography file H_1_{k}")
            try:
                h_gt = read_homography_file(h_path)
            except (ValueError, MatchingError) as exc:
                raise MalformedSequence(f"{name}: unparsable H_1_{k}: {exc}") from exc
            pairs.append(SequencePair(
                sequence_id=name, kind=kind, target_index=k,
                reference_path=reference, target_path=target, h_gt=h_gt,
            ))
    return pairs


def match_errors(matches: Sequence[PixelMatch], h_gt: Homography) -> np.ndarray:
    """Ground-truth reprojection error ||H_gt(pA) - pB|| per match."""
    if not matches:
        return np.empty(0)
    arr = np.asarray(matches, dtype=np.float64)
    proj = h_gt.apply_many(arr[:, 0:2])
    err = np.sqrt(((proj - arr[:, 2:4]) ** 2).sum(axis=1))
    err[~np.isfinite(err)] = math.inf
    return err


def mma(matches: Sequence[PixelMatch], h_gt: Homography,
        thresholds: Sequence[int] = MMA_THRESHOLDS) -> dict[int, float]:
    """Fraction of matches within each pixel threshold of their projection.

    An empty match set scores 0 at every threshold (and is logged) rather
    than being excluded from aggregation.
    """
    if not matches:
        log.warning("mma: empty match set scored as 0 at all thresholds")
        return {t: 0.0 for t in thresholds}
    errors = match_errors(matches, h_gt)
    n = len(errors)
    return {t: float((errors <= t).sum()) / n for t in thresholds}


def dataset_mma(per_pair: Sequence[tuple[SequencePair, dict[int, float], int]],
                thresholds: Sequence[int] = MMA_THRESHOLDS) -> dict:
    """Aggregate per-pair accuracy curves into overall and per-kind means.

    per_pair holds (pair, accuracy-curve, match-count) triples; curves are
    averaged unweighted within each split.
    """
    splits: dict[str, list[dict[int, float]]] = {
        "overall": [], "illumination": [], "viewpoint": [],
    }
    counts = []
    for pair, curve, n_matches in per_pair:
        splits["overall"].append(curve)
        splits[pair.kind].append(curve)
        counts.append(n_matches)

    def mean_curve(curves: list[dict[int, float]]) -> dict[int, float]:
        if not curves:
            return {t: 0.0 for t in thresholds}
        return {
            t: float(np.mean([c[t] for c in curves])) for t in thresholds
        }

    return {
        "curves": {name: mean_curve(curves) for name, curves in splits.items()},
        "mean_match_count": float(np.mean(counts)) if counts else 0.0,
        "pair_count": len(per_pair),
    }


def homography_accuracy(
    pairs: Sequence[SequencePair],
    matcher: Callable[[SequencePair], list[PixelMatch]],
    runs: int = 10,
    thresholds: Sequence[int] = HOMOGRAPHY_THRESHOLDS,
    msac: MsacParams = MsacParams(),
    base_seed: int = 0,
    estimator: Callable[..., object] = msac_homography,
) -> dict:
    """Repeated-run homography estimation accuracy.

    For every pair the matcher runs once; the robust estimator then runs
    ``runs`` times with fresh derived seeds.  A pair is correct at threshold
    t in one run iff the corner error of the estimated homography against the
    ground truth is <= t.  Reports, per threshold: mean and sample standard
    deviation of the per-run accuracy, plus best-outcome (any run correct)
    and worst-outcome (all runs correct) rates.
    """
    if runs < 2:
        raise ValueError("runs must be >= 2")
    # correct[p, r, t_idx]
    correct = np.zeros((len(pairs), runs, len(thresholds)), dtype=bool)
    for p_idx, pair in enumerate(pairs):
        try:
            matches = matcher(pair)
        except MatchingError as exc:
            log.warning("pair %s/%d failed: %s", pair.sequence_id,
                        pair.target_index, exc)
            continue
        ref_w, ref_h = _image_dims(pair.reference_path)
        for run in range(runs):
            seed = derive_seed(base_seed, p_idx, run)
            try:
                fit = estimator(matches, MsacParams(
                    confidence=msac.confidence, max_trials=msac.max_trials,
                    max_distance=msac.max_distance, seed=seed,
                ))
            except MatchingError as exc:
                log.warning("pair %s/%d run %d failed: %s", pair.sequence_id,
                            pair.target_index, run, exc)
                continue
            err = corner_error(fit.homography, pair.h_gt, ref_w, ref_h)
            for t_idx, t in enumerate(thresholds):
                correct[p_idx, run, t_idx] = err <= t

    report = {}
    for t_idx, t in enumerate(thresholds):
        per_run = correct[:, :, t_idx].mean(axis=0) if len(pairs) else np.zeros(runs)
        report[t] = {
            "mean": float(per_run.mean()),
            "std": float(per_run.std(ddof=1)),
            "boe": float(correct[:, :, t_idx].any(axis=1).mean()) if len(pairs) else 0.0,
            "woe": float(correct[:, :, t_idx].all(axis=1).mean()) if len(pairs) else 0.0,
        }
    return {"runs": runs, "pair_count": len(pairs), "thresholds": report}


def _image_dims(path: str) -> tuple[int, int]:
    from PIL import Image

    with Image.open(path) as im:
        return im.size  # (width, height)
