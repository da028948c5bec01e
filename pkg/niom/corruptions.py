"""
The 15 common image corruptions at severities 1-5.

Every corruption is a pure function of (image, kind, severity, seed). Random
fields come from a counter-based Philox generator keyed on the seed, and the
draws do not depend on the severity, so stronger severities rescale or extend
the same realization. Severity parameters are read from
data/corruption_params.txt. Severity 0 returns the input unchanged.
"""

import io
import logging
import os
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from PIL import Image
from pydantic import BaseModel, Field, field_validator
from scipy import ndimage

from .config import derive_seed
from .formats import to_uint8

logger = logging.getLogger(__name__)

PARAMS_PATH = os.path.join(os.path.dirname(__file__), "data", "corruption_params.txt")
MIN_IMAGE_SIZE = 32
MAX_SEVERITY = 5


class CorruptionKind(str, Enum):
    GAUSSIAN_NOISE = "gaussian_noise"
    SHOT_NOISE = "shot_noise"
    IMPULSE_NOISE = "impulse_noise"
    DEFOCUS_BLUR = "defocus_blur"
    GLASS_BLUR = "glass_blur"
    MOTION_BLUR = "motion_blur"
    ZOOM_BLUR = "zoom_blur"
    SNOW = "snow"
    FROST = "frost"
    FOG = "fog"
    BRIGHTNESS = "brightness"
    CONTRAST = "contrast"
    ELASTIC_TRANSFORM = "elastic_transform"
    PIXELATE = "pixelate"
    JPEG_COMPRESSION = "jpeg_compression"

    @property
    def label(self) -> str:
        """Table row label, e.g. "Gaussian Noise"."""
        if self is CorruptionKind.JPEG_COMPRESSION:
            return "JPEG"
        return self.value.replace("_", " ").title()

    @classmethod
    def parse(cls, text: str) -> "CorruptionKind":
        """Accepts snake_case, kebab-case, CamelCase or the table label."""
        if isinstance(text, cls):
            return text
        key = str(text).replace("_", "").replace("-", "").replace(" ", "").lower()
        for kind in cls:
            if kind.value.replace("_", "") == key or kind.label.replace(" ", "").lower() == key:
                return kind
        raise ValueError(f"Unknown corruption kind: {text!r}")


class CorruptionSide(str, Enum):
    BOTH = "both"
    A_ONLY = "a"
    B_ONLY = "b"

    @property
    def label(self) -> str:
        return {"both": "Both", "a": "AOnly", "b": "BOnly"}[self.value]


class CorruptionSpec(BaseModel):
    kind: CorruptionKind
    severity: int = Field(..., ge=0, le=MAX_SEVERITY)
    seed: int = Field(0, ge=0, lt=2 ** 64)

    @field_validator("kind", mode="before")
    @classmethod
    def _parse_kind(cls, v):
        return CorruptionKind.parse(v)


@dataclass(frozen=True)
class PairImages:
    """The two decoded RGB images of one evaluation pair."""
    pair_id: str
    image_a: np.ndarray
    image_b: np.ndarray


# ---------------------------------------------------------------------------
# Severity table
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def load_params(path: str = PARAMS_PATH) -> dict:
    """{(kind, severity): {param: value}} from the plain-text table."""
    table = {}
    with open(path) as f:
        for line_number, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            try:
                kind = CorruptionKind(fields[0])
                severity = int(fields[1])
                params = {k: float(v) for k, v in (item.split("=", 1) for item in fields[2:])}
            except (ValueError, IndexError) as e:
                raise ValueError(f"{path}:{line_number}: malformed severity entry ({e})") from e
            table[(kind, severity)] = params

    for kind in CorruptionKind:
        for severity in range(1, MAX_SEVERITY + 1):
            if (kind, severity) not in table:
                raise ValueError(f"{path}: missing entry for {kind.value} severity {severity}")
    return table


def severity_params(kind: CorruptionKind, severity: int) -> dict:
    if not 1 <= severity <= MAX_SEVERITY:
        raise ValueError(f"Unsupported severity {severity}")
    return load_params()[(CorruptionKind(kind), severity)]


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed)))


def _per_channel(image: np.ndarray, fn) -> np.ndarray:
    return np.stack([fn(image[..., c]) for c in range(image.shape[2])], axis=-1)


def _luma(image: np.ndarray) -> np.ndarray:
    return image[..., 0] * 0.299 + image[..., 1] * 0.587 + image[..., 2] * 0.114


def disk_kernel(radius: float, alias_blur: float) -> np.ndarray:
    half = max(8, int(np.ceil(radius)))
    coords = np.arange(-half, half + 1)
    xx, yy = np.meshgrid(coords, coords)
    kernel = (xx ** 2 + yy ** 2 <= radius ** 2).astype(np.float64)
    kernel /= kernel.sum()
    # light anti-aliasing of the hard disk edge
    kernel = ndimage.gaussian_filter(kernel, sigma=alias_blur, mode="constant")
    return kernel / kernel.sum()


def line_kernel(length: float, angle_deg: float) -> np.ndarray:
    """Anti-aliased segment of the given length through the kernel center."""
    half = int(np.ceil((length - 1) / 2.0)) + 1
    size = 2 * half + 1
    kernel = np.zeros((size, size))
    t = np.linspace(-(length - 1) / 2.0, (length - 1) / 2.0, max(int(4 * length), 2))
    angle = np.deg2rad(angle_deg)
    xs = half + t * np.cos(angle)
    ys = half + t * np.sin(angle)
    x0, y0 = np.floor(xs).astype(np.intp), np.floor(ys).astype(np.intp)
    fx, fy = xs - x0, ys - y0
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            np.add.at(kernel, (y0 + dy, x0 + dx), wx * wy)
    return kernel / kernel.sum()


def plasma_fractal(mapsize: int, rng: np.random.Generator, wibbledecay: float = 3.0) -> np.ndarray:
    """Diamond-square height map in [0, 1]; mapsize must be a power of two."""
    if mapsize < 2 or mapsize & (mapsize - 1):
        raise ValueError(f"mapsize must be a power of two >= 2, got {mapsize}")
    maparray = np.zeros((mapsize, mapsize))
    stepsize = mapsize
    wibble = 100.0

    def wibbledmean(array):
        return array / 4 + wibble * rng.uniform(-wibble, wibble, array.shape)

    while stepsize >= 2:
        half = stepsize // 2
        corners = maparray[0:mapsize:stepsize, 0:mapsize:stepsize]
        square = corners + np.roll(corners, shift=-1, axis=0)
        square += np.roll(square, shift=-1, axis=1)
        maparray[half:mapsize:stepsize, half:mapsize:stepsize] = wibbledmean(square)

        centers = maparray[half:mapsize:stepsize, half:mapsize:stepsize]
        corners = maparray[0:mapsize:stepsize, 0:mapsize:stepsize]
        left = centers + np.roll(centers, 1, axis=0) + corners + np.roll(corners, -1, axis=1)
        maparray[0:mapsize:stepsize, half:mapsize:stepsize] = wibbledmean(left)
        top = centers + np.roll(centers, 1, axis=1) + corners + np.roll(corners, -1, axis=0)
        maparray[half:mapsize:stepsize, 0:mapsize:stepsize] = wibbledmean(top)

        stepsize //= 2
        wibble /= wibbledecay

    maparray -= maparray.min()
    peak = maparray.max()
    return maparray / peak if peak > 0 else maparray


def _fractal_field(shape: tuple[int, int], rng: np.random.Generator, wibbledecay: float = 3.0) -> np.ndarray:
    mapsize = 1 << int(np.ceil(np.log2(max(shape[0], shape[1], 2))))
    return plasma_fractal(mapsize, rng, wibbledecay)[:shape[0], :shape[1]]


def _zoom_center(channel: np.ndarray, factor: float) -> np.ndarray:
    height, width = channel.shape
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    return ndimage.map_coordinates(channel, [cy + (ys - cy) / factor, cx + (xs - cx) / factor],
                                   order=1, mode="nearest")


# ---------------------------------------------------------------------------
# Corruptions
# ---------------------------------------------------------------------------

def gaussian_noise(x, p, rng):
    return x + p["sigma"] * rng.standard_normal(x.shape)


def shot_noise(x, p, rng):
    lam = p["lam"]
    return rng.poisson(x * lam) / lam


def impulse_noise(x, p, rng):
    hit = rng.random(x.shape[:2]) < p["p"]
    salt = rng.random(x.shape[:2]) < 0.5
    out = x.copy()
    out[hit & salt] = 1.0
    out[hit & ~salt] = 0.0
    return out


def defocus_blur(x, p, rng):
    kernel = disk_kernel(p["radius"], p["alias_blur"])
    if kernel.shape[0] > min(x.shape[:2]):
        raise ValueError(f"Image {x.shape[1]}x{x.shape[0]} too small for a {kernel.shape[0]} px defocus kernel")
    return _per_channel(x, lambda c: ndimage.convolve(c, kernel, mode="reflect"))


def glass_blur(x, p, rng):
    sigma, block, rounds = p["sigma"], int(p["block"]), int(p["rounds"])
    blur = (sigma, sigma, 0)
    out = ndimage.gaussian_filter(x, sigma=blur, mode="reflect")
    height, width = out.shape[:2]
    for _ in range(rounds):
        oy, ox = rng.integers(0, block, size=2)
        rows, cols = (height - oy) // block, (width - ox) // block
        region = out[oy:oy + rows * block, ox:ox + cols * block]
        tiles = region.reshape(rows, block, cols, block, 3).transpose(0, 2, 1, 3, 4).reshape(rows, cols, block * block, 3)
        # one random permutation of the pixels inside every block
        order = np.argsort(rng.random((rows, cols, block * block)), axis=-1)
        tiles = np.take_along_axis(tiles, order[..., None], axis=2)
        out[oy:oy + rows * block, ox:ox + cols * block] = (
            tiles.reshape(rows, cols, block, block, 3).transpose(0, 2, 1, 3, 4).reshape(rows * block, cols * block, 3))
    return ndimage.gaussian_filter(out, sigma=blur, mode="reflect")


def motion_blur(x, p, rng):
    angle = rng.uniform(-45.0, 45.0)
    kernel = line_kernel(p["length"], angle)
    return _per_channel(x, lambda c: ndimage.convolve(c, kernel, mode="nearest"))


def zoom_blur(x, p, rng):
    # the unzoomed frame counts once; the last frame uses the full factor
    steps = int(round((p["zoom"] - 1.0) / 0.01))
    factors = np.linspace(1.0, p["zoom"], steps + 1)
    out = x.copy()
    for factor in factors[1:]:
        out += _per_channel(x, lambda c: _zoom_center(c, factor))
    return out / len(factors)


def snow(x, p, rng):
    angle = rng.uniform(-45.0, 45.0)
    flakes = (rng.random(x.shape[:2]) < p["density"]).astype(np.float64)
    streaks = np.clip(3.0 * ndimage.convolve(flakes, line_kernel(9, angle), mode="nearest"), 0.0, 1.0)
    lightened = np.maximum(x, _luma(x)[..., None] * 1.5 + 0.5)
    base = (1.0 - p["lighten"]) * x + p["lighten"] * lightened
    return base + p["intensity"] * streaks[..., None]


def frost(x, p, rng):
    field = _fractal_field(x.shape[:2], rng, wibbledecay=1.8)
    # keep the upper part of the fractal as crystal structure
    crystals = np.clip((field - 0.35) / 0.65, 0.0, 1.0)
    overlay = p["amount"] * crystals[..., None]
    return 1.0 - (1.0 - x) * (1.0 - overlay)


def fog(x, p, rng):
    field = 0.5 + 0.5 * _fractal_field(x.shape[:2], rng, wibbledecay=2.0)
    return (1.0 - p["mix"]) * x + p["mix"] * field[..., None]


def brightness(x, p, rng):
    """Shift the HSV value channel; hue and saturation are kept."""
    value = x.max(axis=2)
    shifted = np.clip(value + p["shift"], 0.0, 1.0)
    lit = value > 0
    scale = np.where(lit, shifted / np.where(lit, value, 1.0), 0.0)
    out = x * scale[..., None]
    out[~lit] = shifted[~lit, None]
    return out


def contrast(x, p, rng):
    means = x.mean(axis=(0, 1), keepdims=True)
    return (x - means) * p["factor"] + means


def elastic_transform(x, p, rng):
    height, width = x.shape[:2]
    smoothing = p["smoothing"]
    dx = ndimage.gaussian_filter(rng.uniform(-1.0, 1.0, (height, width)), smoothing, mode="reflect")
    dy = ndimage.gaussian_filter(rng.uniform(-1.0, 1.0, (height, width)), smoothing, mode="reflect")
    peak = max(np.abs(dx).max(), np.abs(dy).max())
    if peak > 0:
        dx *= p["magnitude"] / peak
        dy *= p["magnitude"] / peak
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    coords = [ys + dy, xs + dx]
    return _per_channel(x, lambda c: ndimage.map_coordinates(c, coords, order=1, mode="nearest"))


def pixelate(x, p, rng):
    block = int(p["block"])
    height, width = x.shape[:2]
    starts_y, starts_x = np.arange(0, height, block), np.arange(0, width, block)
    sums = np.add.reduceat(np.add.reduceat(x, starts_y, axis=0), starts_x, axis=1)
    # edge blocks average only the pixels inside the image
    counts_y = np.minimum(block, height - starts_y)
    counts_x = np.minimum(block, width - starts_x)
    means = sums / (counts_y[:, None, None] * counts_x[None, :, None])
    upscaled = np.repeat(np.repeat(means, block, axis=0), block, axis=1)
    return upscaled[:height, :width]


def jpeg_compression(x, p, rng):
    buf = io.BytesIO()
    Image.fromarray(to_uint8(x)).save(buf, format="JPEG", quality=int(p["quality"]),
                                      optimize=False, progressive=False)
    buf.seek(0)
    with Image.open(buf) as decoded:
        return np.asarray(decoded.convert("RGB"), dtype=np.float64) / 255.0


CORRUPTIONS = {
    CorruptionKind.GAUSSIAN_NOISE: gaussian_noise,
    CorruptionKind.SHOT_NOISE: shot_noise,
    CorruptionKind.IMPULSE_NOISE: impulse_noise,
    CorruptionKind.DEFOCUS_BLUR: defocus_blur,
    CorruptionKind.GLASS_BLUR: glass_blur,
    CorruptionKind.MOTION_BLUR: motion_blur,
    CorruptionKind.ZOOM_BLUR: zoom_blur,
    CorruptionKind.SNOW: snow,
    CorruptionKind.FROST: frost,
    CorruptionKind.FOG: fog,
    CorruptionKind.BRIGHTNESS: brightness,
    CorruptionKind.CONTRAST: contrast,
    CorruptionKind.ELASTIC_TRANSFORM: elastic_transform,
    CorruptionKind.PIXELATE: pixelate,
    CorruptionKind.JPEG_COMPRESSION: jpeg_compression,
}


def corrupt(image: np.ndarray, spec: CorruptionSpec) -> np.ndarray:
    """Apply one corruption to an RGB image in [0, 1]; the result has the same shape."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"Expected an RGB image of shape (h, w, 3), got {image.shape}")
    if min(image.shape[:2]) < MIN_IMAGE_SIZE:
        raise ValueError(f"Image too small: {image.shape[1]}x{image.shape[0]} (minimum {MIN_IMAGE_SIZE}x{MIN_IMAGE_SIZE})")
    if spec.severity == 0:
        return image.copy()

    params = severity_params(spec.kind, spec.severity)
    out = CORRUPTIONS[spec.kind](image, params, _rng(spec.seed))
    return np.clip(out, 0.0, 1.0)


def side_seed(seed: int, pair_id: str, side_index: int) -> int:
    """seed XOR hash(pair_id, side_index), kept in the u64 range."""
    return (int(seed) ^ derive_seed(pair_id, side_index)) & 0xFFFFFFFFFFFFFFFF


def corrupt_pair(pair: PairImages, spec: CorruptionSpec, side: CorruptionSide = CorruptionSide.BOTH) -> PairImages:
    """
    Both corrupts each image with its own derived seed; AOnly/BOnly leave the
    other image untouched (clean-vs-corrupted protocol).
    """
    side = CorruptionSide(side)
    image_a, image_b = pair.image_a, pair.image_b
    if side in (CorruptionSide.BOTH, CorruptionSide.A_ONLY):
        image_a = corrupt(image_a, spec.model_copy(update={"seed": side_seed(spec.seed, pair.pair_id, 0)}))
    if side in (CorruptionSide.BOTH, CorruptionSide.B_ONLY):
        image_b = corrupt(image_b, spec.model_copy(update={"seed": side_seed(spec.seed, pair.pair_id, 1)}))
    return PairImages(pair.pair_id, image_a, image_b)
