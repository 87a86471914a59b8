"""Homography estimation and image warping.

The linear fit is a Hartley-normalized DLT; the robust loop is MSAC (a
RANSAC variant scoring hypotheses by the sum of truncated squared transfer
errors instead of inlier counts), with adaptive trial counts and a final
plain-DLT refit on the inliers of the best hypothesis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .core import Homography, ImageBuffer, PixelMatch
from .errors import (
    DegenerateConfiguration,
    NoModelFound,
    SingularMatrix,
    TooFewMatches,
)

_RANK_TOL = 1e-10
_AREA_TOL = 1e-8


@dataclass(frozen=True)
class MsacParams:
    confidence: float = 0.9999
    max_trials: int = 5000
    max_distance: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")
        if self.max_trials < 1:
            raise ValueError("max_trials must be >= 1")
        if self.max_distance <= 0.0:
            raise ValueError("max_distance must be positive")


@dataclass(frozen=True)
class RobustFit:
    homography: Homography
    inlier_flags: np.ndarray  # bool, one per input match
    score: float              # sum of truncated squared residuals

    @property
    def inlier_count(self) -> int:
        return int(self.inlier_flags.sum())


def _normalizing_transform(pts: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin, mean distance to sqrt(2)."""
    centroid = pts.mean(axis=0)
    mean_dist = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    scale = math.sqrt(2.0) / mean_dist if mean_dist > 0 else 1.0
    return np.array([
        [scale, 0.0, -scale * centroid[0]],
        [0.0, scale, -scale * centroid[1]],
        [0.0, 0.0, 1.0],
    ])


def _match_arrays(matches: Sequence[PixelMatch]) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(matches, dtype=np.float64)
    return arr[:, 0:2], arr[:, 2:4]


def dlt_homography(matches: Sequence[PixelMatch]) -> Homography:
    """Least-squares homography mapping each match's A side onto its B side.

    Normalized DLT: both sides are Hartley-normalized, the stacked 2Nx9
    system is solved by SVD, and the result is de-normalized.
    """
    if len(matches) < 4:
        raise TooFewMatches(f"DLT needs >= 4 matches, got {len(matches)}")
    src, dst = _match_arrays(matches)
    t_src = _normalizing_transform(src)
    t_dst = _normalizing_transform(dst)
    sh = src @ t_src[:2, :2].T + t_src[:2, 2]
    dh = dst @ t_dst[:2, :2].T + t_dst[:2, 2]

    n = len(matches)
    a = np.zeros((2 * n, 9))
    x, y = sh[:, 0], sh[:, 1]
    u, v = dh[:, 0], dh[:, 1]
    a[0::2, 0] = -x
    a[0::2, 1] = -y
    a[0::2, 2] = -1.0
    a[0::2, 6] = u * x
    a[0::2, 7] = u * y
    a[0::2, 8] = u
    a[1::2, 3] = -x
    a[1::2, 4] = -y
    a[1::2, 5] = -1.0
    a[1::2, 6] = v * x
    a[1::2, 7] = v * y
    a[1::2, 8] = v

    if a.shape[0] < 9:
        # minimal system: the full SVD carries the null-space vector
        _, s, vt = np.linalg.svd(a)
    else:
        # economy SVD: avoids the (2N)^2 U matrix for large inlier refits
        _, s, vt = np.linalg.svd(a, full_matrices=False)
    if s[7] < _RANK_TOL * s[0]:
        raise DegenerateConfiguration("DLT system rank below 8")
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ hn @ t_src
    return Homography(h)


def _has_collinear_triple(pts: np.ndarray) -> bool:
    """True if any 3 of the 4 points are collinear (area test, normalized coords)."""
    t = _normalizing_transform(pts)
    p = pts @ t[:2, :2].T + t[:2, 2]
    for i, j, k in combinations(range(4), 3):
        area = 0.5 * abs(
            (p[j, 0] - p[i, 0]) * (p[k, 1] - p[i, 1])
            - (p[k, 0] - p[i, 0]) * (p[j, 1] - p[i, 1])
        )
        if area < _AREA_TOL:
            return True
    return False


def _transfer_sq_errors(h: Homography, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Squared one-directional transfer error ||H(pA) - pB||^2 per match."""
    proj = h.apply_many(src)
    err = proj - dst
    sq = (err ** 2).sum(axis=1)
    sq[~np.isfinite(sq)] = np.inf
    return sq


def msac_homography(matches: Sequence[PixelMatch], params: MsacParams) -> RobustFit:
    """Robust homography fit via seeded MSAC with adaptive trial count.

    Samples minimal 4-point sets, rejects configurations with collinear
    triples on either side, scores hypotheses by sum(min(d^2, t^2)), and
    refits on the best hypothesis's inliers.  Fully deterministic for a
    fixed seed and input order.
    """
    n = len(matches)
    if n < 4:
        raise TooFewMatches(f"MSAC needs >= 4 matches, got {n}")
    src, dst = _match_arrays(matches)
    rng = np.random.default_rng(params.seed)
    t_sq = params.max_distance ** 2

    best_h: Homography | None = None
    best_score = math.inf
    best_inliers: np.ndarray | None = None
    trials_needed = params.max_trials
    trial = 0
    log1mc = math.log(1.0 - params.confidence)

    while trial < min(trials_needed, params.max_trials):
        trial += 1
        idx = rng.choice(n, size=4, replace=False)
        sample_src, sample_dst = src[idx], dst[idx]
        if _has_collinear_triple(sample_src) or _has_collinear_triple(sample_dst):
            continue
        try:
            h = dlt_homography([matches[i] for i in idx])
        except (DegenerateConfiguration, SingularMatrix):
            continue
        sq = _transfer_sq_errors(h, src, dst)
        score = float(np.minimum(sq, t_sq).sum())
        if score < best_score:
            best_score = score
            best_h = h
            best_inliers = sq <= t_sq
            w = best_inliers.mean()
            if 0.0 < w < 1.0:
                denom = math.log(1.0 - w ** 4)
                if denom < 0.0:
                    trials_needed = math.ceil(log1mc / denom)
            elif w >= 1.0:
                trials_needed = trial  # all inliers; stop

    if best_h is None or best_inliers is None:
        raise NoModelFound("every sampled minimal set was degenerate")

    # Refit on the consensus set; keep the hypothesis if the refit is worse.
    if best_inliers.sum() >= 4:
        try:
            refit = dlt_homography([m for m, f in zip(matches, best_inliers) if f])
            sq = _transfer_sq_errors(refit, src, dst)
            refit_score = float(np.minimum(sq, t_sq).sum())
            if refit_score <= best_score:
                return RobustFit(homography=refit, inlier_flags=sq <= t_sq,
                                 score=refit_score)
        except (DegenerateConfiguration, SingularMatrix):
            pass
    return RobustFit(homography=best_h, inlier_flags=best_inliers, score=best_score)


def warp_image(image: ImageBuffer, h_ba: Homography, out_width: int,
               out_height: int) -> ImageBuffer:
    """Inverse-map warp: output(q) = bilinear sample of image at H^-1(q).

    Samples outside the source raster contribute zero.  Exact for integer
    translations (bilinear weights collapse to a single pixel).
    """
    h_inv = h_ba.inverse().matrix
    ys, xs = np.mgrid[0:out_height, 0:out_width].astype(np.float64)
    w = h_inv[2, 0] * xs + h_inv[2, 1] * ys + h_inv[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = (h_inv[0, 0] * xs + h_inv[0, 1] * ys + h_inv[0, 2]) / w
        sy = (h_inv[1, 0] * xs + h_inv[1, 1] * ys + h_inv[1, 2]) / w
    bad = ~np.isfinite(sx) | ~np.isfinite(sy)
    sx[bad] = -2.0
    sy[bad] = -2.0

    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = (sx - x0).astype(np.float32)
    fy = (sy - y0).astype(np.float32)

    out = np.zeros((out_height, out_width, image.channels), dtype=np.float32)
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0 + dx
            yi = y0 + dy
            valid = (xi >= 0) & (xi < image.width) & (yi >= 0) & (yi < image.height)
            wgt = np.where(dx == 1, fx, 1.0 - fx) * np.where(dy == 1, fy, 1.0 - fy)
            wgt = (wgt * valid).astype(np.float32)
            vals = image.data[np.clip(yi, 0, image.height - 1),
                              np.clip(xi, 0, image.width - 1)]
            out += vals * wgt[:, :, None]
    out = np.clip(out, 0.0, 1.0)
    return ImageBuffer(width=out_width, height=out_height,
                       channels=image.channels, data=out)


def backmap_matches(matches: Sequence[PixelMatch], h_ba: Homography,
                    b_width: int | None = None,
                    b_height: int | None = None) -> list[PixelMatch]:
    """Map warped-frame B-side coordinates back to original B coordinates.

    Each (pA, pBw) becomes (pA, H_BA^-1(pBw)).  When B's original extent is
    given, back-mapped points outside it are dropped.
    """
    if not matches:
        return []
    h_inv = h_ba.inverse()
    arr = np.asarray(matches, dtype=np.float64)
    mapped = h_inv.apply_many(arr[:, 2:4])
    keep = np.all(np.isfinite(mapped), axis=1)
    if b_width is not None:
        keep &= (mapped[:, 0] >= -0.5) & (mapped[:, 0] <= b_width - 0.5)
    if b_height is not None:
        keep &= (mapped[:, 1] >= -0.5) & (mapped[:, 1] <= b_height - 0.5)
    return [
        PixelMatch(float(a[0]), float(a[1]), float(b[0]), float(b[1]))
        for a, b in zip(arr[keep, 0:2], mapped[keep])
    ]


def corner_error(h_est: Homography, h_gt: Homography, width: int,
                 height: int) -> float:
    """Mean displacement of the four image corners between two homographies."""
    corners = np.array([
        [0.0, 0.0],
        [width - 1.0, 0.0],
        [0.0, height - 1.0],
        [width - 1.0, height - 1.0],
    ])
    pe = h_est.apply_many(corners)
    pg = h_gt.apply_many(corners)
    if not (np.all(np.isfinite(pe)) and np.all(np.isfinite(pg))):
        return math.inf
    return float(np.sqrt(((pe - pg) ** 2).sum(axis=1)).mean())
