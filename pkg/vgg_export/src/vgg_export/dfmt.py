"""Writers for the DFMT tensor interchange format and its pyramid manifest.

A DFMT file holds one float32 tensor: 4-byte magic ``DFMT``, then six
little-endian uint32 fields (version=1, ndim=3, C, H, W, dtype code 0 for
float32), then the payload in channel-outermost row-major order.  The
manifest is a JSON document naming the six layer files (l1..l5 plus the
terminal map) along with the source and padded image dimensions.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"DFMT"
VERSION = 1
DTYPE_F32 = 0
LAYER_NAMES = ("l1", "l2", "l3", "l4", "l5", "terminal")


def write_dfmt(path: str | os.PathLike, data: np.ndarray) -> None:
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim != 3:
        raise ValueError("DFMT tensors are 3-dimensional (C, H, W)")
    c, h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<6I", VERSION, 3, c, h, w, DTYPE_F32))
        fh.write(data.tobytes())


def write_manifest(
    manifest_path: str | os.PathLike,
    source_width: int,
    source_height: int,
    padded_width: int,
    padded_height: int,
    layer_files: dict[str, str],
) -> None:
    layers = []
    for name in LAYER_NAMES:
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
