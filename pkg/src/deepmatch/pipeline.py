"""Two-stage matching pipeline.

Stage 0 matches the terminal (deepest) feature maps densely, lifts the grid
matches to pixel space, and fits a robust homography H_BA that coarsely
aligns image B to image A.  B is warped with H_BA, features are extracted
again for the warped image, and Stage 1 runs a full-grid search on the
layer-5 maps followed by hierarchical refinement down to layer 1.  The final
matches are lifted to pixels and the B side is mapped back through H_BA into
B's original frame.  The one-stage variant skips alignment entirely.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from PIL import Image

from .core import (
    FeaturePyramid,
    Homography,
    ImageBuffer,
    MatchSet,
    PixelMatch,
    grid_to_pixel,
)
from .dnns import NO_RATIO_TEST, DescriptorView, dnns
from .errors import InsufficientMatches, NoInitialMatches, TooFewMatches, NoModelFound
from .extractor import ExtractorConfig, extract, extract_via_export
from .geometry import MsacParams, RobustFit, backmap_matches, msac_homography, warp_image
from .refine import SCHEDULES, ThresholdSchedule, hra_step

VARIANTS = ("s1", "s0_s1")


@dataclass(frozen=True)
class PipelineConfig:
    variant: str = "s0_s1"
    schedule_name: str = "r09"
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    msac: MsacParams = field(default_factory=MsacParams)
    min_stage0_matches: int = 4

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.schedule_name not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule_name!r}")
        if self.min_stage0_matches < 4:
            raise ValueError("min_stage0_matches must be >= 4")

    @property
    def schedule(self) -> ThresholdSchedule:
        return SCHEDULES[self.schedule_name]


@dataclass(frozen=True)
class MatchResult:
    matches: list[PixelMatch]
    stage0_homography: Homography | None
    diagnostics: dict


def stage0(pyr_a: FeaturePyramid, pyr_b: FeaturePyramid, msac: MsacParams,
           min_matches: int = 4) -> RobustFit:
    """Coarse alignment: terminal-map matching (no ratio test) + MSAC fit.

    Returns the robust fit of H_BA, the homography taking B pixel
    coordinates into A's frame.
    """
    grid = dnns(
        DescriptorView.full_grid(pyr_a.terminal),
        DescriptorView.full_grid(pyr_b.terminal),
        NO_RATIO_TEST,
    )
    if len(grid) < min_matches:
        raise InsufficientMatches(
            f"stage 0 found {len(grid)} matches, need {min_matches}"
        )
    # Fit B -> A: the DLT source side carries the B endpoints.
    correspondences = []
    for m in grid.matches:
        xa, ya = grid_to_pixel(m.a)
        xb, yb = grid_to_pixel(m.b)
        correspondences.append(PixelMatch(xb, yb, xa, ya))
    return msac_homography(correspondences, msac)


def stage1(pyr_a: FeaturePyramid, pyr_bw: FeaturePyramid,
           schedule: ThresholdSchedule) -> tuple[MatchSet, dict[int, int]]:
    """Full-grid layer-5 matching followed by refinement to layer 1.

    Returns the layer-1 match set and the per-layer match counts.
    """
    matches = dnns(
        DescriptorView.full_grid(pyr_a.layer_map(5)),
        DescriptorView.full_grid(pyr_bw.layer_map(5)),
        schedule.by_layer(5),
    )
    if len(matches) == 0:
        raise NoInitialMatches("no mutual matches on the layer-5 grids")
    counts = {5: len(matches)}
    for n in range(5, 1, -1):
        matches = hra_step(
            pyr_a.layer_map(n - 1),
            pyr_bw.layer_map(n - 1),
            matches,
            schedule.by_layer(n - 1),
        )
        counts[n - 1] = len(matches)
    return matches, counts


def _extract_for(image: ImageBuffer, config: ExtractorConfig,
                 manifest: str | None) -> FeaturePyramid:
    if config.backend == "tensor_files" and manifest is not None:
        config = replace(config, tensor_manifest_path=manifest)
    return extract(image, config)


def _save_png(image: ImageBuffer, path: str) -> None:
    arr = np.round(image.data * 255.0).astype(np.uint8)
    if image.channels == 1:
        Image.fromarray(arr[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(arr, mode="RGB").save(path)


def _lift_matches(grid_matches: MatchSet) -> list[PixelMatch]:
    out = []
    for m in grid_matches.matches:
        xa, ya = grid_to_pixel(m.a)
        xb, yb = grid_to_pixel(m.b)
        out.append(PixelMatch(xa, ya, xb, yb))
    return out


def _inside(matches: Sequence[PixelMatch], wa: int, ha: int,
            wb: int, hb: int) -> list[PixelMatch]:
    """Drop matches whose endpoints leave the original (unpadded) extents."""
    return [
        m for m in matches
        if -0.5 <= m.xa <= wa - 0.5 and -0.5 <= m.ya <= ha - 0.5
        and -0.5 <= m.xb <= wb - 0.5 and -0.5 <= m.yb <= hb - 0.5
    ]


def dfm_match(image_a: ImageBuffer, image_b: ImageBuffer,
              config: PipelineConfig,
              manifest_a: str | None = None,
              manifest_b: str | None = None,
              stage0_override: Homography | None = None) -> MatchResult:
    """Match two images end to end, returning pixel matches in original frames.

    stage0_override forces the coarse alignment homography (used by tests and
    diagnostics); None runs the normal Stage-0 estimate.  On Stage-0 failure
    the pipeline degrades to an identity warp rather than erroring out.
    """
    diagnostics: dict = {"variant": config.variant, "schedule": config.schedule_name}
    pyr_a = _extract_for(image_a, config.extractor, manifest_a)

    h_ba: Homography | None = None
    if config.variant == "s1":
        pyr_bw = _extract_for(image_b, config.extractor, manifest_b)
    else:
        pyr_b = _extract_for(image_b, config.extractor, manifest_b)
        fallback = False
        if stage0_override is not None:
            h_ba = stage0_override
            diagnostics["stage0_inlier_count"] = None
        else:
            try:
                fit = stage0(pyr_b=pyr_b, pyr_a=pyr_a, msac=config.msac,
                             min_matches=config.min_stage0_matches)
                if fit.inlier_count < 4:
                    fallback = True
                else:
                    h_ba = fit.homography
                    diagnostics["stage0_inlier_count"] = fit.inlier_count
            except (InsufficientMatches, TooFewMatches, NoModelFound):
                fallback = True
        if fallback:
            h_ba = Homography.identity()
            diagnostics["stage0_inlier_count"] = 0
        diagnostics["stage0_fallback"] = fallback

        warped = warp_image(image_b, h_ba, pyr_a.source_width, pyr_a.source_height)
        if config.extractor.backend == "tensor_files":
            pyr_bw = extract_via_export(warped, config.extractor, _save_png)
        else:
            pyr_bw = extract(warped, config.extractor)

    try:
        grid_matches, counts = stage1(pyr_a, pyr_bw, config.schedule)
    except NoInitialMatches:
        diagnostics["layer_counts"] = {5: 0}
        diagnostics["final_count"] = 0
        return MatchResult(matches=[], stage0_homography=h_ba,
                           diagnostics=diagnostics)
    diagnostics["layer_counts"] = counts

    matches = _lift_matches(grid_matches)
    if config.variant == "s0_s1" and h_ba is not None:
        matches = backmap_matches(matches, h_ba, b_width=image_b.width,
                                  b_height=image_b.height)
    matches = _inside(matches, image_a.width, image_a.height,
                      image_b.width, image_b.height)
    diagnostics["final_count"] = len(matches)
    return MatchResult(matches=matches, stage0_homography=h_ba,
                       diagnostics=diagnostics)
