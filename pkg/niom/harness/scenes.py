# niom/harness/scenes.py

"""
Synthetic benchmark scenes with known relative pose.

A textured box (three faces visible, so the scene is not planar) is
ray-cast by two calibrated cameras. Camera B orbits the box center. The
background of each image is independent random clutter, and the object
heatmap comes from the projected bounding box through synth_heatmap.
"""

import logging
import math
import os
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from ..formats import write_image
from ..geometry import CameraIntrinsics, RelativePose
from ..heatmap import DetectionBox, synth_heatmap
from .manifest import PairCategory, PairRecord, save_manifest

logger = logging.getLogger(__name__)

IMAGE_WIDTH = 320
IMAGE_HEIGHT = 240
FOCAL = 300.0
TEXTURE_SIZE = 128
BENCHMARK_PAIRS = 50

_LIGHT = np.array([-0.3, -0.5, -0.8]) / np.linalg.norm([-0.3, -0.5, -0.8])


@dataclass(frozen=True)
class Camera:
    intrinsics: CameraIntrinsics
    rotation: np.ndarray      # world -> camera
    translation: np.ndarray

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def project(self, points: np.ndarray) -> np.ndarray:
        cam = points @ self.rotation.T + self.translation
        k = self.intrinsics
        return np.stack([k.fx * cam[:, 0] / cam[:, 2] + k.cx, k.fy * cam[:, 1] / cam[:, 2] + k.cy], axis=1)


@dataclass(frozen=True)
class BoxObject:
    center: np.ndarray
    rotation: np.ndarray      # object -> world
    half_extents: np.ndarray
    textures: tuple           # six (S, S, 3) arrays, faces -x, +x, -y, +y, -z, +z

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=np.float64)
        return (signs * self.half_extents) @ self.rotation.T + self.center


@dataclass(frozen=True)
class SyntheticPair:
    pair_id: str
    category: PairCategory
    image_a: np.ndarray
    image_b: np.ndarray
    camera_a: Camera
    camera_b: Camera
    box_a: DetectionBox
    box_b: DetectionBox

    @property
    def relative_pose(self) -> RelativePose:
        """Camera A is the world frame, so the pose is camera B's extrinsics with unit translation."""
        t = self.camera_b.translation
        return RelativePose(self.camera_b.rotation, t / np.linalg.norm(t))


# ---------------------------------------------------------------------------
# Construction helpers
# ---------------------------------------------------------------------------

def _rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _signed_uniform(rng: np.random.Generator, low: float, high: float) -> float:
    return float(rng.uniform(low, high) * rng.choice([-1.0, 1.0]))


def look_at(center: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """World->camera (R, t) for a camera at `center` looking at `target`, image y pointing down."""
    forward = target - center
    forward /= np.linalg.norm(forward)
    right = np.cross(np.array([0.0, 1.0, 0.0]), forward)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return rotation, -rotation @ center


def random_texture(rng: np.random.Generator, width: int, height: int, shapes: int) -> np.ndarray:
    """Random overlapping rectangles and ellipses on a flat background; corner-rich by construction."""
    img = Image.new("RGB", (width, height), tuple(int(c) for c in rng.integers(0, 256, 3)))
    draw = ImageDraw.Draw(img)
    small, large = max(2, min(width, height) // 16), max(3, min(width, height) // 4)
    for _ in range(shapes):
        x0, y0 = (int(v) for v in rng.integers(0, [width, height]))
        w, h = (int(v) for v in rng.integers(small, large, 2))
        color = tuple(int(c) for c in rng.integers(0, 256, 3))
        if rng.random() < 0.6:
            draw.rectangle([x0, y0, x0 + w, y0 + h], fill=color)
        else:
            draw.ellipse([x0, y0, x0 + w, y0 + h], fill=color)
    return np.asarray(img, dtype=np.float64) / 255.0


def _variant(obj: BoxObject, category: PairCategory, rng: np.random.Generator) -> BoxObject:
    """The object seen by camera B for non-identical categories."""
    if category is PairCategory.SAME_OBJECT:
        return obj
    if category is PairCategory.SAME_APPEARANCE:
        gain = rng.uniform(0.8, 1.2, 3)
        offset = rng.uniform(-0.08, 0.08, 3)
        return replace(obj, textures=tuple(np.clip(t * gain + offset, 0, 1) for t in obj.textures))
    if category is PairCategory.SAME_CLASS:
        textures = []
        for t in obj.textures:
            overlay = random_texture(rng, TEXTURE_SIZE, TEXTURE_SIZE, 8)
            mask = random_texture(rng, TEXTURE_SIZE, TEXTURE_SIZE, 6)[..., 0] > 0.7
            textures.append(np.where(mask[..., None], overlay, t))
        return replace(obj, textures=tuple(textures))
    if category is PairCategory.CLASS_DISCREPANCY:
        return replace(obj, half_extents=obj.half_extents * rng.uniform(0.8, 1.2, 3))
    # DomainShift: posterized grayscale rendering of the same textures
    textures = []
    for t in obj.textures:
        gray = t @ np.array([0.299, 0.587, 0.114])
        textures.append(np.repeat((np.round(gray * 3) / 3)[..., None], 3, axis=2))
    return replace(obj, textures=tuple(textures))


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def render(camera: Camera, obj: BoxObject, background: np.ndarray) -> np.ndarray:
    """Ray-cast the box over the background; one ray per pixel center."""
    height, width = background.shape[:2]
    k = camera.intrinsics
    us, vs = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    rays = np.stack([(us - k.cx) / k.fx, (vs - k.cy) / k.fy, np.ones_like(us)], axis=-1)

    # ray origin and directions in the box frame
    origin = (camera.center - obj.center) @ obj.rotation
    dirs = (rays @ camera.rotation) @ obj.rotation

    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (-obj.half_extents - origin) * inv
        t2 = (obj.half_extents - origin) * inv
    t_min = np.minimum(t1, t2)
    t_max = np.maximum(t1, t2)
    t_near = t_min.max(axis=-1)
    t_far = t_max.min(axis=-1)
    hit = (t_near <= t_far) & (t_near > 0)

    axis = t_min.argmax(axis=-1)
    points = origin + t_near[..., None] * dirs
    out = background.copy()
    size = TEXTURE_SIZE - 1
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        for positive in (False, True):
            sel = hit & (axis == a) & ((points[..., a] > 0) == positive)
            if not np.any(sel):
                continue
            face = 2 * a + int(positive)
            u = (points[sel][:, b] / obj.half_extents[b] + 1.0) * 0.5
            v = (points[sel][:, c] / obj.half_extents[c] + 1.0) * 0.5
            coords = [np.clip(v, 0, 1) * size, np.clip(u, 0, 1) * size]
            texture = obj.textures[face]
            colors = np.stack([ndimage.map_coordinates(texture[..., ch], coords, order=1, mode="nearest")
                               for ch in range(3)], axis=-1)
            normal = np.zeros(3)
            normal[a] = 1.0 if positive else -1.0
            shade = 0.55 + 0.45 * abs(float((obj.rotation @ normal) @ _LIGHT))
            out[sel] = np.clip(colors * shade, 0.0, 1.0)
    return out


def _projected_box(camera: Camera, obj: BoxObject, width: int, height: int) -> DetectionBox:
    pts = camera.project(obj.corners())
    x_min, y_min = np.clip(pts.min(axis=0), 0, [width - 1, height - 1])
    x_max, y_max = np.clip(pts.max(axis=0), 0, [width - 1, height - 1])
    return DetectionBox(x_min=float(x_min), y_min=float(y_min), x_max=float(x_max), y_max=float(y_max), score=1.0)


def make_pair(pair_id: str, seed: int, category: PairCategory = PairCategory.SAME_OBJECT,
              width: int = IMAGE_WIDTH, height: int = IMAGE_HEIGHT) -> SyntheticPair:
    rng = np.random.default_rng(seed)
    intrinsics = CameraIntrinsics(fx=FOCAL, fy=FOCAL, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0)

    # yaw and pitch away from zero keep three faces in view
    yaw = math.radians(_signed_uniform(rng, 20.0, 45.0))
    pitch = math.radians(_signed_uniform(rng, 10.0, 25.0))
    obj = BoxObject(
        center=np.array([rng.uniform(-0.2, 0.2), rng.uniform(-0.15, 0.15), rng.uniform(3.8, 4.6)]),
        rotation=_rot_y(yaw) @ _rot_x(pitch),
        half_extents=rng.uniform(0.5, 0.8, 3),
        textures=tuple(random_texture(rng, TEXTURE_SIZE, TEXTURE_SIZE, 40) for _ in range(6)),
    )
    obj_b = _variant(obj, PairCategory(category), rng)

    camera_a = Camera(intrinsics, np.eye(3), np.zeros(3))
    orbit = _rot_y(math.radians(_signed_uniform(rng, 8.0, 16.0))) @ _rot_x(math.radians(rng.uniform(-4.0, 4.0)))
    center_b = obj.center + orbit @ (np.zeros(3) - obj.center)
    target = obj.center + rng.uniform(-0.1, 0.1, 3)
    rotation_b, translation_b = look_at(center_b, target)
    camera_b = Camera(intrinsics, rotation_b, translation_b)

    # clutter is drawn independently for each image
    background_a = random_texture(rng, width, height, 60)
    background_b = random_texture(rng, width, height, 60)

    return SyntheticPair(
        pair_id=pair_id,
        category=PairCategory(category),
        image_a=render(camera_a, obj, background_a),
        image_b=render(camera_b, obj_b, background_b),
        camera_a=camera_a,
        camera_b=camera_b,
        box_a=_projected_box(camera_a, obj, width, height),
        box_b=_projected_box(camera_b, obj_b, width, height),
    )


def write_pair(pair: SyntheticPair, out_dir: str) -> PairRecord:
    """Write images and heatmaps; returns a record with paths relative to out_dir."""
    names = {}
    for side, image, box in (("a", pair.image_a, pair.box_a), ("b", pair.image_b, pair.box_b)):
        image_name = f"{pair.pair_id}_{side}.png"
        heatmap_name = f"{pair.pair_id}_{side}.nioh"
        write_image(os.path.join(out_dir, image_name), image)
        height, width = image.shape[:2]
        synth_heatmap([box], (width, height)).save(os.path.join(out_dir, heatmap_name))
        names[side] = (image_name, heatmap_name)

    return PairRecord(
        pair_id=pair.pair_id,
        image_a=names["a"][0],
        image_b=names["b"][0],
        intrinsics_a=pair.camera_a.intrinsics,
        intrinsics_b=pair.camera_b.intrinsics,
        gt_pose=pair.relative_pose.to_list(),
        category=pair.category,
        heatmaps_a=[names["a"][1]],
        heatmaps_b=[names["b"][1]],
    )


def build_benchmark(out_dir: str, n_pairs: int = BENCHMARK_PAIRS, seed: int = 0,
                    categories: Optional[list[PairCategory]] = None,
                    width: int = IMAGE_WIDTH, height: int = IMAGE_HEIGHT) -> list[PairRecord]:
    """
    Render n_pairs scenes into out_dir plus manifest.jsonl. Categories are
    assigned round-robin (default: all SameObject). Same seed, same files.
    """
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    categories = [PairCategory(c) for c in (categories or [PairCategory.SAME_OBJECT])]
    os.makedirs(out_dir, exist_ok=True)

    seeds = np.random.SeedSequence(seed).generate_state(n_pairs, dtype=np.uint64)
    records = []
    for i in range(n_pairs):
        pair = make_pair(f"pair_{i:03d}", int(seeds[i]), categories[i % len(categories)], width, height)
        records.append(write_pair(pair, out_dir))
        logger.debug(f"Rendered {pair.pair_id} ({pair.category.value})")

    save_manifest(os.path.join(out_dir, "manifest.jsonl"), records)
    logger.info(f"Wrote {n_pairs} synthetic pairs to {out_dir}")
    return records
