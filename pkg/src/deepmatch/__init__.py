"""Training-free dense image matching with hierarchical refinement."""

from .core import (
    FeatureMap,
    FeaturePyramid,
    GridMatch,
    GridPoint,
    Homography,
    ImageBuffer,
    MatchSet,
    PixelMatch,
    grid_to_pixel,
    load_image,
)
from .dnns import DescriptorView, RatioThreshold, dnns
from .extractor import ExtractorConfig, extract, load_pyramid, pad_to_16
from .geometry import (
    MsacParams,
    RobustFit,
    backmap_matches,
    corner_error,
    dlt_homography,
    msac_homography,
    warp_image,
)
from .pipeline import MatchResult, PipelineConfig, dfm_match, stage0, stage1
from .refine import ThresholdSchedule, hra_step, receptive, refine_full

__version__ = "0.1.0"

__all__ = [
    "DescriptorView",
    "ExtractorConfig",
    "FeatureMap",
    "FeaturePyramid",
    "GridMatch",
    "GridPoint",
    "Homography",
    "ImageBuffer",
    "MatchResult",
    "MatchSet",
    "MsacParams",
    "PipelineConfig",
    "PixelMatch",
    "RatioThreshold",
    "RobustFit",
    "ThresholdSchedule",
    "backmap_matches",
    "corner_error",
    "dfm_match",
    "dlt_homography",
    "dnns",
    "extract",
    "grid_to_pixel",
    "hra_step",
    "load_image",
    "load_pyramid",
    "msac_homography",
    "pad_to_16",
    "receptive",
    "refine_full",
    "stage0",
    "stage1",
    "warp_image",
]
