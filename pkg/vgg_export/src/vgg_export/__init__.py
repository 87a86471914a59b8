"""VGG-19 activation export in the DFMT interchange format."""

from .dfmt import LAYER_NAMES, write_dfmt, write_manifest
from .errors import ExportError, ImageTooSmall, ModelUnavailable
from .export import CHANNELS, ExportJob, export_pyramid

__version__ = "0.1.0"

__all__ = [
    "CHANNELS",
    "ExportError",
    "ExportJob",
    "ImageTooSmall",
    "LAYER_NAMES",
    "ModelUnavailable",
    "export_pyramid",
    "write_dfmt",
    "write_manifest",
    "__version__",
]
