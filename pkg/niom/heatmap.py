"""
Per-pixel semantic importance maps.

Two providers stand in for an object detector + class-activation pair:
file ingestion (NIOH from external models, or 8-bit PGM) and Gaussian blobs
synthesized from detection boxes. Per-object maps are aggregated by a
pixelwise maximum and sampled bilinearly at keypoint positions.
"""

import logging
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .formats import read_nioh, read_pgm, write_nioh, NIOH_MAGIC

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Heatmap:
    """Row-major grid of importance values in [0, 1], shape (height, width)."""
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"Heatmap must be a non-empty 2-D grid, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Heatmap values must be finite")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ValueError(f"Heatmap values must lie in [0, 1], got [{values.min()}, {values.max()}]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @classmethod
    def zeros(cls, width: int, height: int) -> "Heatmap":
        return cls(np.zeros((height, width)))

    def save(self, path: str) -> None:
        write_nioh(path, self.values)


class DetectionBox(BaseModel):
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    score: float = Field(1.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_extent(self):
        if not self.x_min < self.x_max or not self.y_min < self.y_max:
            raise ValueError(f"Degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})")
        return self


# ---------------------------------------------------------------------------
# Bilinear sampling with edge clamping
# ---------------------------------------------------------------------------

def _bilinear(grid: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear interpolation at (xs, ys); positions outside clamp to the edge pixels."""
    height, width = grid.shape
    xs = np.clip(xs, 0.0, width - 1)
    ys = np.clip(ys, 0.0, height - 1)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = xs - x0
    fy = ys - y0
    top = grid[y0, x0] * (1.0 - fx) + grid[y0, x1] * fx
    bottom = grid[y1, x0] * (1.0 - fx) + grid[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def sample(h: Heatmap, p) -> float:
    """Heatmap value at subpixel position p = (x, y)."""
    x, y = float(p[0]), float(p[1])
    if not (np.isfinite(x) and np.isfinite(y)):
        raise ValueError(f"Sample position must be finite, got ({x}, {y})")
    return float(_bilinear(h.values, np.array([x]), np.array([y]))[0])


def sample_points(h: Heatmap, positions: np.ndarray) -> np.ndarray:
    """Vectorized `sample` over an (n, 2) array of (x, y) positions."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(positions)):
        raise ValueError("Sample positions must be finite")
    if positions.shape[0] == 0:
        return np.zeros(0)
    return _bilinear(h.values, positions[:, 0], positions[:, 1])


def resample(values: np.ndarray, target_size: tuple[int, int]) -> np.ndarray:
    """
    Bilinear resize of a grid to target_size = (width, height).

    Pixel centers are aligned (src = (dst + 0.5) * scale - 0.5), so an identity
    resize returns the input exactly and a 1x1 grid extends to a constant.
    """
    width, height = int(target_size[0]), int(target_size[1])
    if width < 1 or height < 1:
        raise ValueError(f"Target size must be >= 1x1, got {width}x{height}")
    src_h, src_w = values.shape
    if (src_w, src_h) == (width, height):
        return np.array(values, dtype=np.float64)

    xs = (np.arange(width) + 0.5) * (src_w / width) - 0.5
    ys = (np.arange(height) + 0.5) * (src_h / height) - 0.5
    gx, gy = np.meshgrid(xs, ys)
    return _bilinear(np.asarray(values, dtype=np.float64), gx, gy)


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------

def load_heatmap(path: str, target_size: Optional[tuple[int, int]] = None) -> Heatmap:
    """
    Load a NIOH container or 8-bit PGM and resample it to target_size = (width, height)
    (native size when None). PGM pixels are divided by 255; values are clamped to [0, 1].
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"No such heatmap file: {path}")
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == NIOH_MAGIC:
        grid = read_nioh(path)
    else:
        grid = read_pgm(path)

    if target_size is None:
        target_size = (grid.shape[1], grid.shape[0])
    if grid.shape[::-1] != tuple(target_size):
        logger.debug(f"Resampling heatmap {path} from {grid.shape[1]}x{grid.shape[0]} to {target_size[0]}x{target_size[1]}")
    resized = np.clip(resample(grid, target_size), 0.0, 1.0)
    return Heatmap(resized)


def synth_heatmap(boxes: Sequence[DetectionBox], size: tuple[int, int]) -> Heatmap:
    """
    One axis-aligned Gaussian per box (center of the box, sigma = extent / 4,
    peak = score), combined by pixelwise maximum. No boxes -> all zeros.
    """
    width, height = int(size[0]), int(size[1])
    if width < 1 or height < 1:
        raise ValueError(f"Heatmap size must be >= 1x1, got {width}x{height}")

    values = np.zeros((height, width))
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    for box in boxes:
        x_min, x_max = np.clip([box.x_min, box.x_max], 0.0, width - 1)
        y_min, y_max = np.clip([box.y_min, box.y_max], 0.0, height - 1)
        if not (x_min < x_max and y_min < y_max):
            raise ValueError(f"Box {box} is degenerate after clamping to {width}x{height}")

        cx, cy = 0.5 * (x_min + x_max), 0.5 * (y_min + y_max)
        sigma_x, sigma_y = (x_max - x_min) / 4.0, (y_max - y_min) / 4.0
        # separable Gaussian: outer product of the two 1-D profiles
        gx = np.exp(-0.5 * ((xs - cx) / sigma_x) ** 2)
        gy = np.exp(-0.5 * ((ys - cy) / sigma_y) ** 2)
        np.maximum(values, box.score * np.outer(gy, gx), out=values)

    return Heatmap(values)


def aggregate(heatmaps: Sequence[Heatmap]) -> Heatmap:
    """Pixelwise maximum over per-object heatmaps."""
    if not heatmaps:
        raise ValueError("Cannot aggregate an empty list of heatmaps")
    shape = heatmaps[0].values.shape
    for h in heatmaps[1:]:
        if h.values.shape != shape:
            raise ValueError(f"Heatmap dimensions differ: {h.values.shape} vs {shape}")
    if len(heatmaps) == 1:
        return heatmaps[0]
    return Heatmap(np.maximum.reduce([h.values for h in heatmaps]))
