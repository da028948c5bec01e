"""
Binary containers and image files.

NIOH  heatmap:      "NIOH" u32 version u32 width u32 height, width*height f32 (row-major, top-left origin)
NIOK  keypoints:    "NIOK" u32 version u32 n u32 d u8 has_weights,
                    n*2 f32 positions, n f32 responses, n*d f32 descriptors, [n f32 weights]
NIOW  projections:  "NIOW" u32 d, 2*d*d f32 (W_q then W_k)

Everything is little-endian. Images go through Pillow and are returned as
float64 arrays in [0, 1].
"""

import io
import os
import struct
from typing import NamedTuple, Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

NIOH_MAGIC = b"NIOH"
NIOK_MAGIC = b"NIOK"
NIOW_MAGIC = b"NIOW"
FORMAT_VERSION = 1

_F32 = np.dtype("<f4")


class FormatError(ValueError):
    """Bad magic, unsupported version, truncated payload or non-finite data."""


class KeypointFile(NamedTuple):
    positions: np.ndarray      # (n, 2) float64, (x, y)
    responses: np.ndarray      # (n,)
    descriptors: np.ndarray    # (n, d)
    weights: Optional[np.ndarray]


def _read_bytes(path: str) -> bytes:
    if not os.path.exists(path):
        raise FileNotFoundError(f"No such file: {path}")
    with open(path, "rb") as f:
        return f.read()


def _take_f32(buf: bytes, offset: int, count: int, what: str, path: str) -> tuple[np.ndarray, int]:
    end = offset + 4 * count
    if len(buf) < end:
        raise FormatError(f"{path}: truncated {what} ({len(buf) - offset} of {4 * count} bytes)")
    values = np.frombuffer(buf, dtype=_F32, count=count, offset=offset).astype(np.float64)
    return values, end


# ---------------------------------------------------------------------------
# NIOH heatmaps
# ---------------------------------------------------------------------------

def read_nioh(path: str) -> np.ndarray:
    """Returns the stored grid as a (height, width) float64 array."""
    buf = _read_bytes(path)
    if len(buf) < 16 or buf[:4] != NIOH_MAGIC:
        raise FormatError(f"{path}: not a NIOH file")
    version, width, height = struct.unpack_from("<III", buf, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported NIOH version {version}")
    if width < 1 or height < 1:
        raise FormatError(f"{path}: empty NIOH grid {width}x{height}")
    values, _ = _take_f32(buf, 16, width * height, "heatmap payload", path)
    if not np.all(np.isfinite(values)):
        raise FormatError(f"{path}: non-finite heatmap values")
    return values.reshape(height, width)


def write_nioh(path: str, values: np.ndarray) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError(f"Heatmap grid must be 2-D, got shape {values.shape}")
    height, width = values.shape
    with open(path, "wb") as f:
        f.write(NIOH_MAGIC)
        f.write(struct.pack("<III", FORMAT_VERSION, width, height))
        f.write(values.astype(_F32).tobytes())


# ---------------------------------------------------------------------------
# NIOK keypoints
# ---------------------------------------------------------------------------

def read_niok(path: str) -> KeypointFile:
    buf = _read_bytes(path)
    if len(buf) < 17 or buf[:4] != NIOK_MAGIC:
        raise FormatError(f"{path}: not a NIOK file")
    version, n, d = struct.unpack_from("<III", buf, 4)
    has_weights = buf[16]
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported NIOK version {version}")
    if has_weights not in (0, 1):
        raise FormatError(f"{path}: has_weights flag must be 0 or 1, got {has_weights}")

    offset = 17
    positions, offset = _take_f32(buf, offset, 2 * n, "positions", path)
    responses, offset = _take_f32(buf, offset, n, "responses", path)
    descriptors, offset = _take_f32(buf, offset, n * d, "descriptors", path)
    weights = None
    if has_weights:
        weights, offset = _take_f32(buf, offset, n, "weights", path)

    for name, arr in (("positions", positions), ("responses", responses),
                      ("descriptors", descriptors), ("weights", weights)):
        if arr is not None and not np.all(np.isfinite(arr)):
            raise FormatError(f"{path}: non-finite {name}")

    return KeypointFile(
        positions=positions.reshape(n, 2),
        responses=responses,
        descriptors=descriptors.reshape(n, d),
        weights=weights,
    )


def write_niok(path: str, positions: np.ndarray, responses: np.ndarray,
               descriptors: np.ndarray, weights: Optional[np.ndarray] = None) -> None:
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    n = positions.shape[0]
    descriptors = np.asarray(descriptors, dtype=np.float64).reshape(n, -1)
    d = descriptors.shape[1]
    responses = np.asarray(responses, dtype=np.float64).reshape(n)
    with open(path, "wb") as f:
        f.write(NIOK_MAGIC)
        f.write(struct.pack("<IIIB", FORMAT_VERSION, n, d, 0 if weights is None else 1))
        f.write(positions.astype(_F32).tobytes())
        f.write(responses.astype(_F32).tobytes())
        f.write(descriptors.astype(_F32).tobytes())
        if weights is not None:
            f.write(np.asarray(weights, dtype=np.float64).reshape(n).astype(_F32).tobytes())


# ---------------------------------------------------------------------------
# NIOW projection weights
# ---------------------------------------------------------------------------

def read_niow(path: str) -> tuple[np.ndarray, np.ndarray]:
    buf = _read_bytes(path)
    if len(buf) < 8 or buf[:4] != NIOW_MAGIC:
        raise FormatError(f"{path}: not a NIOW file")
    (d,) = struct.unpack_from("<I", buf, 4)
    if d < 1:
        raise FormatError(f"{path}: invalid dimension {d}")
    values, _ = _take_f32(buf, 8, 2 * d * d, "projection matrices", path)
    if not np.all(np.isfinite(values)):
        raise FormatError(f"{path}: non-finite projection weights")
    w_q = values[: d * d].reshape(d, d)
    w_k = values[d * d:].reshape(d, d)
    return w_q, w_k


def write_niow(path: str, w_q: np.ndarray, w_k: np.ndarray) -> None:
    d = w_q.shape[0]
    with open(path, "wb") as f:
        f.write(NIOW_MAGIC)
        f.write(struct.pack("<I", d))
        f.write(np.asarray(w_q).astype(_F32).tobytes())
        f.write(np.asarray(w_k).astype(_F32).tobytes())


# ---------------------------------------------------------------------------
# Images (Pillow)
# ---------------------------------------------------------------------------

def read_pgm(path: str) -> np.ndarray:
    """8-bit binary PGM (P5, maxval 255) -> (h, w) array in [0, 1]."""
    buf = _read_bytes(path)
    if buf[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    try:
        img = Image.open(io.BytesIO(buf))
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise FormatError(f"{path}: unreadable PGM ({e})") from e
    if img.mode != "L":
        raise FormatError(f"{path}: only maxval 255 PGM is supported (mode {img.mode})")
    return np.asarray(img, dtype=np.float64) / 255.0


def read_image(path: str) -> np.ndarray:
    """PNG/PGM/JPEG -> (h, w, 3) float64 RGB in [0, 1]."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"No such file: {path}")
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
    except (UnidentifiedImageError, OSError) as e:
        raise FormatError(f"{path}: unreadable image ({e})") from e
    return np.asarray(rgb, dtype=np.float64) / 255.0


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)


def write_image(path: str, image: np.ndarray) -> None:
    """Writes a [0, 1] grayscale or RGB array as PNG."""
    Image.fromarray(to_uint8(image)).save(path, format="PNG")
