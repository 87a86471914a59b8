"""Exception hierarchy shared across the matching engine."""


class MatchingError(Exception):
    """Base class for all errors raised by this package."""


# --- geometry / numerics ---

class PointAtInfinity(MatchingError):
    """A projective mapping sent a point to the plane at infinity."""


class SingularMatrix(MatchingError):
    """A homography (or candidate matrix) is not invertible."""


class DegenerateConfiguration(MatchingError):
    """Point configuration does not determine a homography."""


class TooFewMatches(MatchingError):
    """Robust estimation needs at least 4 correspondences."""


class NoModelFound(MatchingError):
    """Every sampled minimal set was degenerate."""


# --- images / extraction ---

class ImageTooSmall(MatchingError):
    """Image is smaller than one coarse-grid cell in some dimension."""


class ManifestMismatch(MatchingError):
    """Pyramid manifest is inconsistent with the image it claims to describe."""


class BadMagic(MatchingError):
    """Tensor file does not start with the expected magic bytes."""


class DimMismatch(MatchingError):
    """Declared tensor dimensions violate the pyramid size law."""


class UnsupportedDtype(MatchingError):
    """Tensor file uses a dtype code this reader does not support."""


# --- matching ---

class EmptyCandidates(MatchingError):
    """Nearest-neighbor query against an empty candidate set."""


class ChannelMismatch(MatchingError):
    """Descriptor views have different channel counts."""


class LayerUnderflow(MatchingError):
    """Receptive-field lookup below the finest pyramid layer."""


class LayerMismatch(MatchingError):
    """Feature maps and match set are not at consecutive layers."""


class EmptyInitialSet(MatchingError):
    """Hierarchical refinement started from an empty match set."""


class NoInitialMatches(MatchingError):
    """Coarse full-grid matching produced no mutual matches."""


class InsufficientMatches(MatchingError):
    """Coarse alignment found fewer matches than required for a fit."""


# --- evaluation / io ---

class MalformedSequence(MatchingError):
    """Dataset sequence directory is missing files or has unparsable data."""
