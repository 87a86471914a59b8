"""Shared domain types and coordinate conventions.

Pixel coordinates are (x, y) with x = column and y = row, zero-based, origin
at the center of the top-left pixel.  Feature grids at pyramid layer k have a
stride of 2**(k-1) pixels; a grid cell maps to the center of its stride
footprint in pixel space.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from PIL import Image

from .errors import PointAtInfinity, SingularMatrix

_W_EPS = 1e-12


@dataclass(frozen=True)
class ImageBuffer:
    """Decoded raster image, intensities normalized to [0, 1].

    data has shape (height, width, channels), float32, row-major.
    """

    width: int
    height: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        if self.data.shape != (self.height, self.width, self.channels):
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"{(self.height, self.width, self.channels)}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("image data contains non-finite values")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise ValueError("image data outside [0, 1]")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageBuffer":
        """Build from an (H, W) or (H, W, C) array of [0, 1] intensities."""
        arr = np.asarray(arr, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        h, w, c = arr.shape
        return cls(width=w, height=h, channels=c, data=arr)


def load_image(path: str | os.PathLike) -> ImageBuffer:
    """Decode a PNG or PPM file into an ImageBuffer (grayscale stays 1-channel)."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float32) / 255.0
    return ImageBuffer.from_array(arr)


@dataclass(frozen=True)
class FeatureMap:
    """Dense C x H x W activation grid at one pyramid layer."""

    layer: int
    channels: int
    rows: int
    cols: int
    stride: int
    data: np.ndarray  # (channels, rows, cols) float32

    def __post_init__(self):
        if not 1 <= self.layer <= 5:
            raise ValueError(f"layer must be in 1..5, got {self.layer}")
        if self.stride != 2 ** (self.layer - 1):
            raise ValueError(f"stride {self.stride} != 2**(layer-1)")
        if self.data.shape != (self.channels, self.rows, self.cols):
            raise ValueError("feature data shape mismatch")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature data contains non-finite values")

    @classmethod
    def from_array(cls, layer: int, data: np.ndarray) -> "FeatureMap":
        data = np.ascontiguousarray(data, dtype=np.float32)
        c, h, w = data.shape
        return cls(layer=layer, channels=c, rows=h, cols=w,
                   stride=2 ** (layer - 1), data=data)


@dataclass(frozen=True)
class FeaturePyramid:
    """Per-layer feature maps for one (padded) image plus the terminal map.

    layers holds the five per-layer maps ordered layer 1..5; terminal is the
    deepest-layer map used for coarse alignment and shares layer 5's grid.
    """

    layers: tuple[FeatureMap, ...]
    terminal: FeatureMap
    source_width: int
    source_height: int

    def __post_init__(self):
        if len(self.layers) != 5:
            raise ValueError("pyramid must have exactly 5 layers")
        for k, fmap in enumerate(self.layers, start=1):
            if fmap.layer != k:
                raise ValueError(f"layer {k} map tagged as layer {fmap.layer}")
            s = 2 ** (k - 1)
            if self.source_height % s or self.source_width % s:
                raise ValueError("source dims not divisible by layer stride")
            if fmap.rows != self.source_height // s or fmap.cols != self.source_width // s:
                raise ValueError(
                    f"layer {k} dims {(fmap.rows, fmap.cols)} violate the size law"
                )
        l5 = self.layers[4]
        if (self.terminal.rows, self.terminal.cols) != (l5.rows, l5.cols):
            raise ValueError("terminal map must share layer-5 spatial dims")

    def layer_map(self, layer: int) -> FeatureMap:
        return self.layers[layer - 1]


class GridPoint(NamedTuple):
    """Integer cell index on one pyramid layer's grid."""

    row: int
    col: int
    layer: int


class GridMatch(NamedTuple):
    a: GridPoint
    b: GridPoint


@dataclass(frozen=True)
class MatchSet:
    """Duplicate-free set of grid matches at one layer, in deterministic order."""

    layer: int
    matches: tuple[GridMatch, ...]

    def __post_init__(self):
        seen = set()
        for m in self.matches:
            if m.a.layer != self.layer or m.b.layer != self.layer:
                raise ValueError("match endpoint at wrong layer")
            if m in seen:
                raise ValueError("duplicate match pair")
            seen.add(m)

    @classmethod
    def build(cls, layer: int, pairs: Iterable[GridMatch]) -> "MatchSet":
        """Deduplicate and sort by (rowA, colA, rowB, colB)."""
        unique = sorted(set(pairs),
                        key=lambda m: (m.a.row, m.a.col, m.b.row, m.b.col))
        return cls(layer=layer, matches=tuple(unique))

    def __len__(self) -> int:
        return len(self.matches)


class PixelMatch(NamedTuple):
    """Matched point pair in the two original images' pixel coordinates."""

    xa: float
    ya: float
    xb: float
    yb: float


def grid_to_pixel(p: GridPoint) -> tuple[float, float]:
    """Map a grid cell to the pixel-space center of its stride footprint.

    With stride s = 2**(layer-1), the cell (row, col) covers pixels
    [col*s, col*s + s) x [row*s, row*s + s); its center is offset (s-1)/2.
    At layer 1 this is the identity on (col, row).
    """
    s = 2 ** (p.layer - 1)
    off = (s - 1) / 2.0
    return (p.col * s + off, p.row * s + off)


class Homography:
    """3x3 invertible projective transform.

    The stored matrix is normalized so the bottom-right entry is 1 when it is
    nonzero, otherwise to unit Frobenius norm.
    """

    __slots__ = ("matrix",)

    def __init__(self, matrix: np.ndarray):
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError("homography must be 3x3")
        if not np.all(np.isfinite(m)):
            raise ValueError("homography contains non-finite entries")
        if abs(m[2, 2]) > _W_EPS:
            m = m / m[2, 2]
        else:
            norm = np.linalg.norm(m)
            if norm == 0.0:
                raise SingularMatrix("zero matrix")
            m = m / norm
        if abs(np.linalg.det(m)) <= _W_EPS:
            raise SingularMatrix("homography is numerically singular")
        self.matrix = m

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        m = np.eye(3)
        m[0, 2] = tx
        m[1, 2] = ty
        return cls(m)

    def apply(self, x: float, y: float) -> tuple[float, float]:
        """Project one point; raises PointAtInfinity when the weight vanishes."""
        h = self.matrix
        w = h[2, 0] * x + h[2, 1] * y + h[2, 2]
        if abs(w) < _W_EPS:
            raise PointAtInfinity(f"point ({x}, {y}) maps to infinity")
        return (
            (h[0, 0] * x + h[0, 1] * y + h[0, 2]) / w,
            (h[1, 0] * x + h[1, 1] * y + h[1, 2]) / w,
        )

    def apply_many(self, pts: np.ndarray) -> np.ndarray:
        """Project an (N, 2) array of points; rows at infinity become non-finite."""
        pts = np.asarray(pts, dtype=np.float64)
        h = self.matrix
        w = h[2, 0] * pts[:, 0] + h[2, 1] * pts[:, 1] + h[2, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            xs = (h[0, 0] * pts[:, 0] + h[0, 1] * pts[:, 1] + h[0, 2]) / w
            ys = (h[1, 0] * pts[:, 0] + h[1, 1] * pts[:, 1] + h[1, 2]) / w
        out = np.stack([xs, ys], axis=1)
        out[np.abs(w) < _W_EPS] = np.inf
        return out

    def inverse(self) -> "Homography":
        """Invert via the adjugate so exact integer transforms invert exactly."""
        m = self.matrix
        det = np.linalg.det(m)
        if abs(det) <= _W_EPS:
            raise SingularMatrix("cannot invert a singular homography")
        adj = np.empty((3, 3))
        for i in range(3):
            for j in range(3):
                minor = np.delete(np.delete(m, i, axis=0), j, axis=1)
                adj[j, i] = ((-1) ** (i + j)) * (
                    minor[0, 0] * minor[1, 1] - minor[0, 1] * minor[1, 0]
                )
        return Homography(adj / det)

    def __repr__(self) -> str:
        return f"Homography({self.matrix.tolist()})"


# --- file formats ---------------------------------------------------------
#
# Match files: UTF-8 text, one match per line as "xA yA xB yB" (decimal
# floats, single spaces); lines starting with '#' are comments.
# Homography files: 3 lines of 3 whitespace-separated numbers, row-major
# (same layout as common planar ground-truth files).


def write_matches(path: str | os.PathLike, matches: Sequence[PixelMatch]) -> None:
    """Write a match file atomically (temp file + rename)."""
    lines = [
        f"{float(m.xa)!r} {float(m.ya)!r} {float(m.xb)!r} {float(m.yb)!r}"
        for m in matches
    ]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_matches(path: str | os.PathLike) -> list[PixelMatch]:
    matches = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            xa, ya, xb, yb = (float(p) for p in parts)
            matches.append(PixelMatch(xa, ya, xb, yb))
    return matches


def read_homography_file(path: str | os.PathLike) -> Homography:
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            values.extend(float(tok) for tok in line.split())
    if len(values) != 9:
        raise ValueError(f"{path}: expected 9 numbers, got {len(values)}")
    return Homography(np.array(values).reshape(3, 3))


def write_homography_file(path: str | os.PathLike, h: Homography) -> None:
    rows = [" ".join(repr(float(v)) for v in row) for row in h.matrix]
    atomic_write_text(path, "\n".join(rows) + "\n")


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
