class ExportError(Exception):
    """Base class for export failures."""


class ModelUnavailable(ExportError):
    """Pretrained weights could not be obtained."""


class ImageTooSmall(ExportError):
    """Input image smaller than one 16 px cell in some dimension."""
