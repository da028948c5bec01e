"""
Classical keypoints and descriptors.

Harris corners (Sobel gradients, 3x3 Gaussian window, k = 0.04) with greedy
non-maximum suppression and quadratic subpixel refinement, described by an
upright SIFT-like 4x4x8 histogram over a 16x16 patch. Descriptors live in
[0, 1]^128 with unit (or zero) L2 norm.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from scipy import ndimage

from .formats import read_niok, write_niok

logger = logging.getLogger(__name__)

HARRIS_K = 0.04
MIN_IMAGE_SIZE = 32
DESCRIPTOR_DIM = 128
# patch half-width (8) plus room for the gradient stencil and bilinear taps
DESCRIPTOR_MARGIN = 12

_PATCH = 16
_CELLS = 4
_ORIENTATIONS = 8
_CLIP = 0.2

# 3x3 binomial approximation of a Gaussian window
_WINDOW_1D = np.array([1.0, 2.0, 1.0]) / 4.0


class FeatureConfig(BaseModel):
    max_keypoints: int = Field(2048, ge=1)
    nms_radius: float = Field(4.0, ge=0.0)
    threshold: float = Field(1e-3, ge=0.0)


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    response: float

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class DescriptorSet:
    """Keypoint positions (n, 2) as (x, y), responses (n,), descriptors (n, d)."""
    positions: np.ndarray
    responses: np.ndarray
    descriptors: np.ndarray

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        n = positions.shape[0]
        responses = np.asarray(self.responses, dtype=np.float64).reshape(n)
        descriptors = np.asarray(self.descriptors, dtype=np.float64)
        if descriptors.ndim != 2 or descriptors.shape[0] != n:
            raise ValueError(f"Expected {n} descriptors, got array of shape {descriptors.shape}")
        if not np.all(np.isfinite(positions)):
            raise ValueError("Keypoint positions must be finite")
        if n and (responses.min() < 0):
            raise ValueError("Keypoint responses must be >= 0")
        if descriptors.size and (descriptors.min() < 0.0 or descriptors.max() > 1.0):
            raise ValueError("Descriptor entries must lie in [0, 1]")
        if n and np.linalg.norm(descriptors, axis=1).max() > 1.0 + 1e-6:
            raise ValueError("Descriptor L2 norms must be <= 1")
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "responses", responses)
        object.__setattr__(self, "descriptors", descriptors)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]

    @property
    def keypoints(self) -> list[Keypoint]:
        return [Keypoint(float(x), float(y), float(r))
                for (x, y), r in zip(self.positions, self.responses)]

    @classmethod
    def empty(cls, dim: int = DESCRIPTOR_DIM) -> "DescriptorSet":
        return cls(np.zeros((0, 2)), np.zeros(0), np.zeros((0, dim)))

    @classmethod
    def load(cls, path: str) -> "DescriptorSet":
        kf = read_niok(path)
        return cls(kf.positions, kf.responses, kf.descriptors)

    def save(self, path: str) -> None:
        write_niok(path, self.positions, self.responses, self.descriptors)


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Rec. 601 luma for RGB input; 2-D input is returned as float64."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[2] >= 3:
        return image[..., 0] * 0.299 + image[..., 1] * 0.587 + image[..., 2] * 0.114
    raise ValueError(f"Unsupported image shape {image.shape}")


def _check_image(gray: np.ndarray) -> None:
    if gray.ndim != 2:
        raise ValueError(f"Expected a grayscale raster, got shape {gray.shape}")
    if min(gray.shape) < MIN_IMAGE_SIZE:
        raise ValueError(f"Image too small: {gray.shape[1]}x{gray.shape[0]} (minimum {MIN_IMAGE_SIZE}x{MIN_IMAGE_SIZE})")
    if not np.all(np.isfinite(gray)):
        raise ValueError("Image contains non-finite pixels")


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------

def harris_response(gray: np.ndarray, k: float = HARRIS_K) -> np.ndarray:
    ix = ndimage.sobel(gray, axis=1, mode="nearest")
    iy = ndimage.sobel(gray, axis=0, mode="nearest")

    def window(a):
        a = ndimage.correlate1d(a, _WINDOW_1D, axis=0, mode="nearest")
        return ndimage.correlate1d(a, _WINDOW_1D, axis=1, mode="nearest")

    sxx = window(ix * ix)
    syy = window(iy * iy)
    sxy = window(ix * iy)
    return sxx * syy - sxy * sxy - k * (sxx + syy) ** 2


def _refine(response: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Subpixel offsets from a 2-D quadratic fit of each 3x3 response neighborhood."""
    c = response[ys, xs]
    left, right = response[ys, xs - 1], response[ys, xs + 1]
    up, down = response[ys - 1, xs], response[ys + 1, xs]
    dx = 0.5 * (right - left)
    dy = 0.5 * (down - up)
    dxx = right - 2.0 * c + left
    dyy = down - 2.0 * c + up
    dxy = 0.25 * (response[ys + 1, xs + 1] - response[ys + 1, xs - 1]
                  - response[ys - 1, xs + 1] + response[ys - 1, xs - 1])
    det = dxx * dyy - dxy * dxy

    # only a negative-definite Hessian describes a peak
    peak = (dxx < 0) & (det > 0)
    safe_det = np.where(peak, det, 1.0)
    ox = np.where(peak, -(dyy * dx - dxy * dy) / safe_det, 0.0)
    oy = np.where(peak, -(dxx * dy - dxy * dx) / safe_det, 0.0)
    return np.clip(ox, -0.5, 0.5), np.clip(oy, -0.5, 0.5)


def detect(image: np.ndarray, max_keypoints: int = 2048, nms_radius: float = 4.0,
           threshold: float = 1e-3, border: int = 1) -> list[Keypoint]:
    """
    Harris corners sorted by decreasing response.

    No two returned keypoints are closer than nms_radius, measured after
    subpixel refinement.
    """
    gray = to_grayscale(image)
    _check_image(gray)
    if max_keypoints < 1:
        raise ValueError(f"max_keypoints must be >= 1, got {max_keypoints}")
    border = max(int(border), 1)

    response = harris_response(gray)
    height, width = response.shape

    is_peak = (response == ndimage.maximum_filter(response, size=3, mode="nearest"))
    is_peak &= (response >= threshold) & (response > 0)
    is_peak[:border, :] = False
    is_peak[height - border:, :] = False
    is_peak[:, :border] = False
    is_peak[:, width - border:] = False

    ys, xs = np.nonzero(is_peak)
    if ys.size == 0:
        return []
    values = response[ys, xs]
    order = np.lexsort((xs, ys, -values))
    ys, xs, values = ys[order], xs[order], values[order]

    # refinement moves each point by at most sqrt(0.5) px
    block = nms_radius + 1.5
    r = int(np.ceil(block))
    oy, ox = np.mgrid[-r:r + 1, -r:r + 1]
    disk = (ox * ox + oy * oy) < block * block

    blocked = np.zeros((height + 2 * r, width + 2 * r), dtype=bool)
    keep = []
    for idx in range(ys.size):
        y, x = ys[idx], xs[idx]
        if blocked[y + r, x + r]:
            continue
        keep.append(idx)
        if len(keep) >= max_keypoints:
            break
        if nms_radius > 0:
            blocked[y:y + 2 * r + 1, x:x + 2 * r + 1] |= disk

    keep = np.asarray(keep, dtype=np.intp)
    ys, xs, values = ys[keep], xs[keep], values[keep]
    off_x, off_y = _refine(response, ys, xs)
    return [Keypoint(float(x + dx), float(y + dy), float(v))
            for x, y, dx, dy, v in zip(xs, ys, off_x, off_y, values)]


# ---------------------------------------------------------------------------
# Description
# ---------------------------------------------------------------------------

def describe(image: np.ndarray, keypoints: Sequence[Keypoint]) -> DescriptorSet:
    """
    Upright SIFT-like descriptors: 16x16 patch, 4x4 cells x 8 orientations,
    trilinear binning, L2-normalize, clip at 0.2, re-normalize.
    Patches without gradient energy get the all-zero descriptor.
    """
    gray = to_grayscale(image)
    if not np.all(np.isfinite(gray)):
        raise ValueError("Image contains non-finite pixels")
    n = len(keypoints)
    if n == 0:
        return DescriptorSet.empty()
    height, width = gray.shape

    positions = np.array([[kp.x, kp.y] for kp in keypoints], dtype=np.float64)
    responses = np.array([kp.response for kp in keypoints], dtype=np.float64)
    centers = np.empty_like(positions)
    centers[:, 0] = np.clip(positions[:, 0], DESCRIPTOR_MARGIN, max(width - 1 - DESCRIPTOR_MARGIN, DESCRIPTOR_MARGIN))
    centers[:, 1] = np.clip(positions[:, 1], DESCRIPTOR_MARGIN, max(height - 1 - DESCRIPTOR_MARGIN, DESCRIPTOR_MARGIN))

    grad_y, grad_x = np.gradient(gray)

    # 16x16 sample grid at offsets -7.5 .. 7.5 around each keypoint
    offsets = np.arange(_PATCH, dtype=np.float64) - (_PATCH - 1) / 2.0
    sample_x = centers[:, 0, None, None] + offsets[None, None, :]
    sample_y = centers[:, 1, None, None] + offsets[None, :, None]
    sample_x = np.broadcast_to(sample_x, (n, _PATCH, _PATCH)).ravel()
    sample_y = np.broadcast_to(sample_y, (n, _PATCH, _PATCH)).ravel()
    gx = ndimage.map_coordinates(grad_x, [sample_y, sample_x], order=1, mode="nearest")
    gy = ndimage.map_coordinates(grad_y, [sample_y, sample_x], order=1, mode="nearest")

    sigma = _PATCH / 2.0
    gauss = np.exp(-0.5 * (offsets[:, None] ** 2 + offsets[None, :] ** 2) / sigma ** 2)
    magnitude = np.hypot(gx, gy) * np.tile(gauss.ravel(), n)

    theta = np.mod(np.arctan2(gy, gx), 2.0 * np.pi)
    obin = theta * (_ORIENTATIONS / (2.0 * np.pi))
    o0 = np.floor(obin)
    do = obin - o0
    o0 = o0.astype(np.intp) % _ORIENTATIONS
    o1 = (o0 + 1) % _ORIENTATIONS

    cell = _PATCH // _CELLS
    grid = (np.arange(_PATCH) + 0.5) / cell - 0.5
    rbin = np.broadcast_to(grid[None, :, None], (n, _PATCH, _PATCH)).ravel()
    cbin = np.broadcast_to(grid[None, None, :], (n, _PATCH, _PATCH)).ravel()
    r0 = np.floor(rbin)
    c0 = np.floor(cbin)
    dr, dc = rbin - r0, cbin - c0
    # padded histogram: cell index -1 .. 4 maps to 0 .. 5
    r0 = r0.astype(np.intp) + 1
    c0 = c0.astype(np.intp) + 1
    kp_index = np.repeat(np.arange(n), _PATCH * _PATCH)

    padded = _CELLS + 2
    size = n * padded * padded * _ORIENTATIONS
    hist = np.zeros(size)
    for rr, wr in ((r0, 1.0 - dr), (r0 + 1, dr)):
        for cc, wc in ((c0, 1.0 - dc), (c0 + 1, dc)):
            for oo, wo in ((o0, 1.0 - do), (o1, do)):
                flat = ((kp_index * padded + rr) * padded + cc) * _ORIENTATIONS + oo
                hist += np.bincount(flat, weights=magnitude * wr * wc * wo, minlength=size)

    hist = hist.reshape(n, padded, padded, _ORIENTATIONS)[:, 1:_CELLS + 1, 1:_CELLS + 1, :]
    descriptors = hist.reshape(n, DESCRIPTOR_DIM)

    norms = np.linalg.norm(descriptors, axis=1)
    textured = norms > 1e-12
    descriptors[~textured] = 0.0
    descriptors[textured] /= norms[textured, None]
    np.minimum(descriptors, _CLIP, out=descriptors)
    norms = np.linalg.norm(descriptors, axis=1)
    descriptors[textured] /= norms[textured, None]
    np.clip(descriptors, 0.0, 1.0, out=descriptors)

    return DescriptorSet(positions, responses, descriptors)


def detect_and_describe(image: np.ndarray, config: Optional[FeatureConfig] = None) -> DescriptorSet:
    """Detect then describe; keypoints whose patch would leave the image are never returned."""
    config = config or FeatureConfig()
    gray = to_grayscale(image)
    keypoints = detect(gray, max_keypoints=config.max_keypoints, nms_radius=config.nms_radius,
                       threshold=config.threshold, border=DESCRIPTOR_MARGIN)
    if not keypoints:
        logger.info("No keypoints above threshold")
        return DescriptorSet.empty()
    return describe(gray, keypoints)
