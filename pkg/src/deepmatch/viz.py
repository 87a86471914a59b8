"""Static SVG match-overlay rendering."""

from __future__ import annotations

import base64
import io
from typing import Sequence

import numpy as np
from PIL import Image

from .core import ImageBuffer, PixelMatch

_GAP = 16  # horizontal gap between the two images, in pixels


def _png_data_uri(image: ImageBuffer) -> str:
    arr = np.round(image.data * 255.0).astype(np.uint8)
    pil = Image.fromarray(arr[:, :, 0], "L") if image.channels == 1 \
        else Image.fromarray(arr, "RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def subsample_matches(matches: Sequence[PixelMatch], max_lines: int | None,
                      seed: int = 0) -> list[PixelMatch]:
    """Seeded uniform subsample preserving input order; None keeps everything."""
    if max_lines is None or len(matches) <= max_lines:
        return list(matches)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(matches), size=max_lines, replace=False))
    return [matches[i] for i in idx]


def render_match_svg(image_a: ImageBuffer, image_b: ImageBuffer,
                     matches: Sequence[PixelMatch],
                     max_lines: int | None = None, seed: int = 0) -> str:
    """Render both images side by side with one line segment per match."""
    shown = subsample_matches(matches, max_lines, seed)
    xb_off = image_a.width + _GAP
    width = xb_off + image_b.width
    height = max(image_a.height, image_b.height)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<image x="0" y="0" width="{image_a.width}" height="{image_a.height}" '
        f'href="{_png_data_uri(image_a)}"/>',
        f'<image x="{xb_off}" y="0" width="{image_b.width}" '
        f'height="{image_b.height}" href="{_png_data_uri(image_b)}"/>',
    ]
    for m in shown:
        parts.append(
            f'<line x1="{m.xa:.2f}" y1="{m.ya:.2f}" '
            f'x2="{m.xb + xb_off:.2f}" y2="{m.yb:.2f}" '
            f'stroke="#00c853" stroke-width="0.75" stroke-opacity="0.8"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
