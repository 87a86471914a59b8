"""Feature pyramid extraction.

Two backends produce pyramids behind the same interface:

* ``builtin``: a self-contained deterministic convolutional pyramid with
  seeded random weights.  Each level is a zero-padded stride-1 3x3
  convolution, ReLU, then 2x2 max-pool feeding the next level, so it keeps
  the stride structure and translation equivariance of a standard deep
  backbone without any external model.
* ``tensor_files``: loads pyramids serialized in the DFMT interchange
  format by an external export tool.
"""

from __future__ import annotations

import json
import math
import os
import struct
import subprocess
import tempfile
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .core import FeatureMap, FeaturePyramid, ImageBuffer
from .errors import (
    BadMagic,
    DimMismatch,
    ImageTooSmall,
    ManifestMismatch,
    UnsupportedDtype,
)
from .rng import SplitMix64

PAD_MULTIPLE = 16
BUILTIN_CHANNELS = (8, 16, 32, 64, 64)
BUILTIN_TERMINAL_CHANNELS = 64

_LAYER_NAMES = ("l1", "l2", "l3", "l4", "l5", "terminal")
_DFMT_MAGIC = b"DFMT"
_DFMT_VERSION = 1
_DTYPE_F32 = 0


@dataclass(frozen=True)
class ExtractorConfig:
    """Selects and parameterizes a pyramid backend.

    When backend is ``tensor_files``, tensor_manifest_path names the manifest
    for the image being extracted; export_command, if given, is a shell
    template with ``{image}`` and ``{out_dir}`` placeholders used to produce
    a pyramid for an image that has no pre-exported manifest (e.g. a warped
    intermediate).
    """

    backend: str = "builtin"
    builtin_seed: int = 1
    tensor_manifest_path: str | None = None
    export_command: str | None = None

    def __post_init__(self):
        if self.backend not in ("builtin", "tensor_files"):
            raise ValueError(f"unknown backend {self.backend!r}")


@dataclass(frozen=True)
class PaddedImage:
    """Image zero-padded on the right/bottom to multiples of 16."""

    image: ImageBuffer
    original_width: int
    original_height: int


def pad_to_16(image: ImageBuffer) -> PaddedImage:
    """Zero-pad right/bottom to the smallest multiples of 16 >= the image dims."""
    if image.width < PAD_MULTIPLE or image.height < PAD_MULTIPLE:
        raise ImageTooSmall(
            f"image {image.width}x{image.height} smaller than {PAD_MULTIPLE}px"
        )
    pw = PAD_MULTIPLE * math.ceil(image.width / PAD_MULTIPLE)
    ph = PAD_MULTIPLE * math.ceil(image.height / PAD_MULTIPLE)
    if (pw, ph) == (image.width, image.height):
        padded = image
    else:
        data = np.zeros((ph, pw, image.channels), dtype=np.float32)
        data[: image.height, : image.width] = image.data
        padded = ImageBuffer(width=pw, height=ph, channels=image.channels, data=data)
    return PaddedImage(image=padded, original_width=image.width,
                       original_height=image.height)


# --- builtin backend ------------------------------------------------------

def _generate_filters(prng: SplitMix64, out_ch: int, in_ch: int) -> np.ndarray:
    """Draw (out_ch, in_ch, 3, 3) weights, each output filter l2-normalized.

    Values are consumed from the stream in (out, in, ky, kx) order; weight
    bits are fully determined by the seed, so pyramids are reproducible
    across runs and implementations.
    """
    w = np.empty((out_ch, in_ch, 3, 3), dtype=np.float64)
    flat = w.reshape(-1)
    for i in range(flat.size):
        flat[i] = prng.next_centered()
    norms = np.sqrt((w ** 2).sum(axis=(1, 2, 3), keepdims=True))
    norms[norms == 0.0] = 1.0
    return (w / norms).astype(np.float32)


@lru_cache(maxsize=8)
def _builtin_weights(seed: int, in_channels: int) -> tuple[np.ndarray, ...]:
    prng = SplitMix64(seed)
    weights = []
    prev = in_channels
    for out in BUILTIN_CHANNELS:
        weights.append(_generate_filters(prng, out, prev))
        prev = out
    weights.append(_generate_filters(prng, BUILTIN_TERMINAL_CHANNELS, prev))
    return tuple(weights)


def _conv3x3_relu(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Zero-padded stride-1 3x3 convolution followed by ReLU.

    x: (C, H, W); w: (K, C, 3, 3); returns (K, H, W).
    """
    c, h, width = x.shape
    k = w.shape[0]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    out = np.zeros((k, h, width), dtype=np.float32)
    for dy in range(3):
        for dx in range(3):
            patch = xp[:, dy:dy + h, dx:dx + width].reshape(c, -1)
            out += (w[:, :, dy, dx] @ patch).reshape(k, h, width)
    np.maximum(out, 0.0, out=out)
    return out


def _maxpool2x2(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    return x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))


def _extract_builtin(image: ImageBuffer, seed: int) -> FeaturePyramid:
    padded = pad_to_16(image)
    weights = _builtin_weights(seed, image.channels)
    x = np.ascontiguousarray(padded.image.data.transpose(2, 0, 1))
    layers = []
    for level in range(5):
        x = _conv3x3_relu(x, weights[level])
        layers.append(FeatureMap.from_array(level + 1, x))
        if level < 4:
            x = _maxpool2x2(x)
    terminal_data = _conv3x3_relu(layers[4].data, weights[5])
    terminal = FeatureMap.from_array(5, terminal_data)
    return FeaturePyramid(
        layers=tuple(layers),
        terminal=terminal,
        source_width=padded.image.width,
        source_height=padded.image.height,
    )


# --- DFMT interchange format ---------------------------------------------
#
# Tensor file: magic "DFMT"; u32 LE version (=1); u32 ndim (=3); u32 C, H, W;
# u32 dtype code (0 = little-endian float32); then C*H*W floats, row-major
# within each channel, channels outermost.
# Manifest: JSON with source_width/source_height/padded_width/padded_height
# and "layers": [{"name": l1..l5|terminal, "stride": int, "file": str}].


def write_dfmt(path: str | os.PathLike, data: np.ndarray) -> None:
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim != 3:
        raise ValueError("DFMT tensors are 3-dimensional (C, H, W)")
    c, h, w = data.shape
    header = _DFMT_MAGIC + struct.pack("<6I", _DFMT_VERSION, 3, c, h, w, _DTYPE_F32)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def read_dfmt(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _DFMT_MAGIC:
            raise BadMagic(f"{path}: bad magic {magic!r}")
        version, ndim, c, h, w, dtype = struct.unpack("<6I", fh.read(24))
        if version != _DFMT_VERSION:
            raise UnsupportedDtype(f"{path}: unsupported version {version}")
        if ndim != 3:
            raise DimMismatch(f"{path}: expected 3 dims, got {ndim}")
        if dtype != _DTYPE_F32:
            raise UnsupportedDtype(f"{path}: unsupported dtype code {dtype}")
        payload = fh.read(4 * c * h * w)
        if len(payload) != 4 * c * h * w:
            raise DimMismatch(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype="<f4").reshape(c, h, w).copy()


def write_manifest(
    manifest_path: str | os.PathLike,
    source_width: int,
    source_height: int,
    padded_width: int,
    padded_height: int,
    layer_files: dict[str, str],
) -> None:
    """Write a pyramid manifest; layer_files maps l1..l5/terminal to file names."""
    layers = []
    for name in _LAYER_NAMES:
        stride = 16 if name == "terminal" else 2 ** (int(name[1]) - 1)
        layers.append({"name": name, "stride": stride, "file": layer_files[name]})
    doc = {
        "source_width": source_width,
        "source_height": source_height,
        "padded_width": padded_width,
        "padded_height": padded_height,
        "layers": layers,
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_pyramid(manifest_path: str | os.PathLike) -> FeaturePyramid:
    """Load a serialized pyramid, validating strides and the size law."""
    manifest_dir = os.path.dirname(os.fspath(manifest_path))
    with open(manifest_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        pw, ph = int(doc["padded_width"]), int(doc["padded_height"])
        entries = {e["name"]: e for e in doc["layers"]}
    except (KeyError, TypeError) as exc:
        raise ManifestMismatch(f"{manifest_path}: malformed manifest: {exc}") from exc
    missing = [n for n in _LAYER_NAMES if n not in entries]
    if missing:
        raise ManifestMismatch(f"{manifest_path}: missing layers {missing}")
    if pw % PAD_MULTIPLE or ph % PAD_MULTIPLE:
        raise ManifestMismatch(f"{manifest_path}: padded dims not multiples of 16")

    maps: dict[str, FeatureMap] = {}
    for name in _LAYER_NAMES:
        entry = entries[name]
        layer = 5 if name == "terminal" else int(name[1])
        stride = 2 ** (layer - 1)
        if int(entry["stride"]) != stride:
            raise DimMismatch(
                f"{manifest_path}: layer {name} declares stride {entry['stride']}, "
                f"expected {stride}"
            )
        data = read_dfmt(os.path.join(manifest_dir, entry["file"]))
        expected = (ph // stride, pw // stride)
        if data.shape[1:] != expected:
            raise DimMismatch(
                f"{entry['file']}: dims {data.shape[1:]} violate the size law, "
                f"expected {expected}"
            )
        maps[name] = FeatureMap.from_array(layer, data)

    return FeaturePyramid(
        layers=tuple(maps[f"l{k}"] for k in range(1, 6)),
        terminal=maps["terminal"],
        source_width=pw,
        source_height=ph,
    )


# --- front door -----------------------------------------------------------

def extract(image: ImageBuffer, config: ExtractorConfig) -> FeaturePyramid:
    """Produce a FeaturePyramid for one image under the configured backend.

    Deterministic: identical image + config yield bit-identical pyramids.
    """
    if config.backend == "builtin":
        return _extract_builtin(image, config.builtin_seed)

    if config.tensor_manifest_path is None:
        raise ManifestMismatch("tensor_files backend requires a manifest path")
    pyramid = load_pyramid(config.tensor_manifest_path)
    padded = pad_to_16(image)
    if (pyramid.source_width, pyramid.source_height) != (
        padded.image.width,
        padded.image.height,
    ):
        raise ManifestMismatch(
            f"manifest padded dims {pyramid.source_width}x{pyramid.source_height} "
            f"do not match image padded dims {padded.image.width}x{padded.image.height}"
        )
    return pyramid


def extract_via_export(image: ImageBuffer, config: ExtractorConfig,
                       save_image) -> FeaturePyramid:
    """Run the configured export command on an in-memory image and load the result.

    save_image(image, path) must write the image losslessly (PNG).  Used for
    warped intermediates that have no pre-exported manifest.
    """
    if not config.export_command:
        raise ManifestMismatch(
            "tensor_files backend has no export_command for intermediate images"
        )
    with tempfile.TemporaryDirectory(prefix="deepmatch-export-") as tmp:
        image_path = os.path.join(tmp, "image.png")
        out_dir = os.path.join(tmp, "pyramid")
        os.makedirs(out_dir)
        save_image(image, image_path)
        cmd = config.export_command.format(image=image_path, out_dir=out_dir)
        subprocess.run(cmd, shell=True, check=True)
        manifest = os.path.join(out_dir, "manifest.json")
        return extract(image, replace(config, tensor_manifest_path=manifest))
