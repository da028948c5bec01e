# niom/harness/render.py

"""
Side-by-side match drawings for eyeballing a run.
"""

import logging

import numpy as np
from PIL import Image, ImageDraw

from ..formats import to_uint8
from ..matching import MatchSet

logger = logging.getLogger(__name__)

KEYPOINT_RADIUS = 2
KEYPOINT_COLOR = (0, 160, 255)


def confidence_color(confidence: float) -> tuple[int, int, int]:
    """Low confidence is red, high is green."""
    c = float(np.clip(confidence, 0.0, 1.0))
    return (int(round(255 * (1.0 - c))), int(round(255 * c)), 0)


def _as_rgb(image: np.ndarray) -> Image.Image:
    array = to_uint8(image)
    if array.ndim == 3:
        array = np.ascontiguousarray(array[..., :3])
    return Image.fromarray(array).convert("RGB")


def compose_matches(image_a: np.ndarray, image_b: np.ndarray, positions_a: np.ndarray,
                    positions_b: np.ndarray, matches: MatchSet) -> Image.Image:
    """Side-by-side composite: width = width_a + width_b, height = max of the heights."""
    positions_a = np.asarray(positions_a, dtype=np.float64).reshape(-1, 2)
    positions_b = np.asarray(positions_b, dtype=np.float64).reshape(-1, 2)
    if len(matches):
        if matches.index_a.min() < 0 or matches.index_a.max() >= len(positions_a):
            raise ValueError(f"Match index into A out of bounds (n_a = {len(positions_a)})")
        if matches.index_b.min() < 0 or matches.index_b.max() >= len(positions_b):
            raise ValueError(f"Match index into B out of bounds (n_b = {len(positions_b)})")

    left, right = _as_rgb(image_a), _as_rgb(image_b)
    canvas = Image.new("RGB", (left.width + right.width, max(left.height, right.height)))
    canvas.paste(left, (0, 0))
    canvas.paste(right, (left.width, 0))
    draw = ImageDraw.Draw(canvas)

    r = KEYPOINT_RADIUS
    for x, y in positions_a:
        draw.ellipse([x - r, y - r, x + r, y + r], outline=KEYPOINT_COLOR)
    for x, y in positions_b:
        x += left.width
        draw.ellipse([x - r, y - r, x + r, y + r], outline=KEYPOINT_COLOR)

    for a, b, confidence in matches.pairs:
        xa, ya = positions_a[a]
        xb, yb = positions_b[b]
        draw.line([(xa, ya), (xb + left.width, yb)], fill=confidence_color(confidence), width=1)
    return canvas


def render_matches(image_a: np.ndarray, image_b: np.ndarray, positions_a: np.ndarray,
                   positions_b: np.ndarray, matches: MatchSet, out_path: str) -> None:
    canvas = compose_matches(image_a, image_b, positions_a, positions_b, matches)
    canvas.save(out_path, format="PNG")
    logger.info(f"Wrote {len(matches)} matches to {out_path}")
