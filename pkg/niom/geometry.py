"""
Relative pose from matches and the pose-error AUC metric.

Conventions: normalized image points x_a, x_b satisfy x_b^T E x_a = 0 with
E = [t]x R, where a 3-D point moves between camera frames as X_b = R X_a + t.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)

FAILED_POSE_ERROR = 180.0
MIN_CORRESPONDENCES = 8
# a model must be supported by this many inliers beyond its own minimal sample
MIN_SUPPORT = 8
RANSAC_BATCH = 64
# triangulated depths beyond this many baselines count as points at infinity
MAX_DEPTH = 1e4

_ORTHO_TOL = 1e-9


class DegenerateConfigurationError(ValueError):
    """The 8-point design matrix has rank below 8."""


class NoModelError(RuntimeError):
    """RANSAC found no supported model, or no decomposition passes cheirality."""


class CameraIntrinsics(BaseModel):
    fx: float = Field(..., gt=0)
    fy: float = Field(..., gt=0)
    cx: float
    cy: float

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def mean_focal(self) -> float:
        return 0.5 * (self.fx + self.fy)


@dataclass(frozen=True)
class RelativePose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(rotation)) and np.all(np.isfinite(translation))):
            raise ValueError("Pose entries must be finite")
        if np.abs(rotation.T @ rotation - np.eye(3)).max() > _ORTHO_TOL or np.linalg.det(rotation) < 0:
            raise ValueError("Rotation must be orthonormal with det = +1")
        if abs(np.linalg.norm(translation) - 1.0) > _ORTHO_TOL:
            raise ValueError(f"Translation must be a unit vector, got norm {np.linalg.norm(translation)}")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def nearest(cls, rotation, translation, tolerance: float = 1e-3) -> "RelativePose":
        """
        Projects slightly perturbed values (e.g. rounded in a file) onto a
        valid pose. Inputs further than `tolerance` from one are rejected.
        """
        rotation = np.asarray(rotation, dtype=np.float64).reshape(3, 3)
        translation = np.asarray(translation, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(translation)
        if not np.isfinite(norm) or norm == 0:
            raise ValueError("Translation must be a non-zero finite vector")
        if np.abs(rotation.T @ rotation - np.eye(3)).max() > tolerance or np.linalg.det(rotation) <= 0:
            raise ValueError("Rotation is not close to a proper rotation matrix")
        u, _, vt = np.linalg.svd(rotation)
        return cls(u @ vt, translation / norm)

    def to_list(self) -> list[float]:
        """9 row-major rotation floats followed by 3 translation floats."""
        return [float(v) for v in self.rotation.ravel()] + [float(v) for v in self.translation]

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "RelativePose":
        if len(values) != 12:
            raise ValueError(f"Expected 12 pose values, got {len(values)}")
        return cls.nearest(np.asarray(values[:9]).reshape(3, 3), values[9:])


@dataclass(frozen=True)
class PoseEstimate:
    essential: np.ndarray
    pose: RelativePose
    inlier_indices: np.ndarray
    num_iterations: int
    num_correspondences: int

    @property
    def inlier_ratio(self) -> float:
        if self.num_correspondences == 0:
            return 0.0
        return len(self.inlier_indices) / self.num_correspondences


# ---------------------------------------------------------------------------
# Coordinates
# ---------------------------------------------------------------------------

def normalize_points(points: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return np.stack([(points[:, 0] - k.cx) / k.fx, (points[:, 1] - k.cy) / k.fy], axis=1)


def denormalize_points(points: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return np.stack([points[:, 0] * k.fx + k.cx, points[:, 1] * k.fy + k.cy], axis=1)


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def essential_from_pose(pose: RelativePose) -> np.ndarray:
    return skew(pose.translation) @ pose.rotation


def _homogeneous(points: np.ndarray) -> np.ndarray:
    return np.hstack([points, np.ones((points.shape[0], 1))])


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------

def _conditioning(points: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin with mean distance sqrt(2)."""
    centroid = points.mean(axis=0)
    spread = np.linalg.norm(points - centroid, axis=1).mean()
    scale = math.sqrt(2.0) / spread if spread > 0 else 1.0
    return np.array([[scale, 0.0, -scale * centroid[0]],
                     [0.0, scale, -scale * centroid[1]],
                     [0.0, 0.0, 1.0]])


def essential_8pt(x_a: np.ndarray, x_b: np.ndarray) -> np.ndarray:
    """
    Normalized 8-point estimate of E from >= 8 normalized correspondences,
    projected onto the essential manifold (singular values 1, 1, 0) so the
    result has Frobenius norm sqrt(2).
    """
    x_a = np.asarray(x_a, dtype=np.float64).reshape(-1, 2)
    x_b = np.asarray(x_b, dtype=np.float64).reshape(-1, 2)
    if x_a.shape != x_b.shape:
        raise ValueError(f"Correspondence arrays differ in shape: {x_a.shape} vs {x_b.shape}")
    n = x_a.shape[0]
    if n < MIN_CORRESPONDENCES:
        raise ValueError(f"Need at least {MIN_CORRESPONDENCES} correspondences, got {n}")

    t_a, t_b = _conditioning(x_a), _conditioning(x_b)
    ha = _homogeneous(x_a) @ t_a.T
    hb = _homogeneous(x_b) @ t_b.T
    design = (hb[:, :, None] * ha[:, None, :]).reshape(n, 9)

    _, s, vt = np.linalg.svd(design)
    if s[7] <= 1e-10 * s[0]:
        raise DegenerateConfigurationError(f"Rank-deficient design matrix (singular values {s})")
    e = vt[-1].reshape(3, 3)
    e = t_b.T @ e @ t_a

    u, _, vt = np.linalg.svd(e)
    return u @ np.diag([1.0, 1.0, 0.0]) @ vt


def sampson_distance(e: np.ndarray, x_a: np.ndarray, x_b: np.ndarray) -> np.ndarray:
    """First-order geometric epipolar distance, in normalized units."""
    ha = _homogeneous(np.asarray(x_a, dtype=np.float64).reshape(-1, 2))
    hb = _homogeneous(np.asarray(x_b, dtype=np.float64).reshape(-1, 2))
    e_xa = ha @ e.T
    et_xb = hb @ e
    residual = np.einsum("ij,ij->i", hb, e_xa)
    denom = e_xa[:, 0] ** 2 + e_xa[:, 1] ** 2 + et_xb[:, 0] ** 2 + et_xb[:, 1] ** 2
    return np.abs(residual) / np.sqrt(np.maximum(denom, 1e-30))


def _essential_8pt_batch(x_a: np.ndarray, x_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    essential_8pt over a stack of minimal samples, shapes (B, 8, 2).
    Returns (B, 3, 3) models and a (B,) mask of non-degenerate samples.
    """
    batch = x_a.shape[0]

    def condition(points):
        centroid = points.mean(axis=1, keepdims=True)
        spread = np.linalg.norm(points - centroid, axis=2).mean(axis=1)
        scale = np.where(spread > 0, math.sqrt(2.0) / np.where(spread > 0, spread, 1.0), 1.0)
        t = np.zeros((batch, 3, 3))
        t[:, 0, 0] = t[:, 1, 1] = scale
        t[:, 0, 2] = -scale * centroid[:, 0, 0]
        t[:, 1, 2] = -scale * centroid[:, 0, 1]
        t[:, 2, 2] = 1.0
        conditioned = np.concatenate([(points - centroid) * scale[:, None, None],
                                      np.ones(points.shape[:2] + (1,))], axis=2)
        return t, conditioned

    t_a, ha = condition(x_a)
    t_b, hb = condition(x_b)
    design = (hb[:, :, :, None] * ha[:, :, None, :]).reshape(batch, -1, 9)
    _, s, vt = np.linalg.svd(design)
    valid = s[:, 7] > 1e-10 * s[:, 0]
    e = vt[:, -1, :].reshape(batch, 3, 3)
    e = np.transpose(t_b, (0, 2, 1)) @ e @ t_a

    u, _, vt = np.linalg.svd(e)
    u[:, :, 2] = 0.0
    return u @ vt, valid


def _sampson_batch(models: np.ndarray, ha: np.ndarray, hb: np.ndarray) -> np.ndarray:
    """(B, N) Sampson distances of homogeneous points under each model."""
    e_xa = np.einsum("bij,nj->bni", models, ha)
    et_xb = np.einsum("bji,nj->bni", models, hb)
    residual = np.einsum("nj,bnj->bn", hb, e_xa)
    denom = e_xa[..., 0] ** 2 + e_xa[..., 1] ** 2 + et_xb[..., 0] ** 2 + et_xb[..., 1] ** 2
    return np.abs(residual) / np.sqrt(np.maximum(denom, 1e-30))


def _draw_samples(rng: np.random.Generator, n: int, batch: int) -> np.ndarray:
    """(batch, 8) indices, distinct within each row."""
    return np.argpartition(rng.random((batch, n)), MIN_CORRESPONDENCES - 1, axis=1)[:, :MIN_CORRESPONDENCES]


def _required_iterations(inlier_fraction: float, confidence: float, max_iters: int) -> int:
    if inlier_fraction <= 0:
        return max_iters
    good = inlier_fraction ** MIN_CORRESPONDENCES
    if good >= 1.0:
        return 1
    needed = math.log(1.0 - confidence) / math.log(1.0 - good)
    return max(1, min(max_iters, int(math.ceil(needed))))


def ransac_essential(x_a: np.ndarray, x_b: np.ndarray, threshold: float = 1e-3, max_iters: int = 10000,
                     confidence: float = 0.999, seed: int = 0) -> PoseEstimate:
    """
    Seeded RANSAC over 8-point minimal samples with Sampson-distance scoring,
    adaptive iteration count, and a final refit on the inlier set.
    Hypotheses are drawn and scored in batches of RANSAC_BATCH; the first
    best-supported model in draw order wins.
    """
    x_a = np.asarray(x_a, dtype=np.float64).reshape(-1, 2)
    x_b = np.asarray(x_b, dtype=np.float64).reshape(-1, 2)
    n = x_a.shape[0]
    if x_b.shape[0] != n:
        raise ValueError(f"Correspondence arrays differ in length: {n} vs {x_b.shape[0]}")
    if n < MIN_CORRESPONDENCES:
        raise ValueError(f"Need at least {MIN_CORRESPONDENCES} correspondences, got {n}")
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"Confidence must lie in (0, 1), got {confidence}")
    if threshold <= 0 or max_iters < 1:
        raise ValueError("threshold must be > 0 and max_iters >= 1")

    rng = np.random.default_rng(seed)
    ha, hb = _homogeneous(x_a), _homogeneous(x_b)
    best_model, best_inliers, best_support = None, None, -1
    needed = max_iters
    iteration = 0
    while iteration < needed:
        batch = min(RANSAC_BATCH, needed - iteration)
        iteration += batch
        samples = _draw_samples(rng, n, batch)
        models, valid = _essential_8pt_batch(x_a[samples], x_b[samples])
        inliers = _sampson_batch(models, ha, hb) < threshold
        support = inliers.sum(axis=1) - np.take_along_axis(inliers, samples, axis=1).sum(axis=1)
        support = np.where(valid, support, -1)
        k = int(np.argmax(support))
        if support[k] > best_support:
            best_model, best_inliers, best_support = models[k], inliers[k], int(support[k])
            needed = max(iteration, _required_iterations(inliers[k].mean(), confidence, max_iters))

    if best_model is None or best_support < MIN_SUPPORT:
        raise NoModelError(f"No essential matrix supported by {MIN_SUPPORT} inliers after {iteration} iterations")

    model, inliers = best_model, best_inliers
    # refit on the consensus set while it keeps growing
    for _ in range(3):
        try:
            refit = essential_8pt(x_a[inliers], x_b[inliers])
        except DegenerateConfigurationError:
            break
        refit_inliers = sampson_distance(refit, x_a, x_b) < threshold
        if refit_inliers.sum() < inliers.sum():
            break
        grew = refit_inliers.sum() > inliers.sum()
        model, inliers = refit, refit_inliers
        if not grew:
            break

    indices = np.flatnonzero(inliers)
    pose = decompose_essential(model, x_a[indices], x_b[indices])
    return PoseEstimate(model, pose, indices, iteration, n)


def _triangulate(rotation: np.ndarray, translation: np.ndarray, x_a: np.ndarray, x_b: np.ndarray):
    """Linear triangulation with P_a = [I | 0], P_b = [R | t]; returns (depth_a, depth_b, valid)."""
    p_a = np.hstack([np.eye(3), np.zeros((3, 1))])
    p_b = np.hstack([rotation, translation.reshape(3, 1)])
    rows = np.stack([
        x_a[:, 0, None] * p_a[2] - p_a[0],
        x_a[:, 1, None] * p_a[2] - p_a[1],
        x_b[:, 0, None] * p_b[2] - p_b[0],
        x_b[:, 1, None] * p_b[2] - p_b[1],
    ], axis=1)
    _, _, vt = np.linalg.svd(rows)
    homog = vt[:, -1, :]
    w = homog[:, 3]
    finite = np.abs(w) > 1e-12 * np.linalg.norm(homog, axis=1)
    safe_w = np.where(finite, w, 1.0)
    points = homog[:, :3] / safe_w[:, None]
    depth_a = points[:, 2]
    depth_b = points @ rotation[2] + translation[2]
    valid = finite & (np.abs(depth_a) < MAX_DEPTH) & (np.abs(depth_b) < MAX_DEPTH)
    return depth_a, depth_b, valid


def decompose_essential(e: np.ndarray, x_a: np.ndarray, x_b: np.ndarray) -> RelativePose:
    """Four-fold decomposition; keeps the candidate with most points in front of both cameras."""
    x_a = np.asarray(x_a, dtype=np.float64).reshape(-1, 2)
    x_b = np.asarray(x_b, dtype=np.float64).reshape(-1, 2)
    if x_a.shape[0] < 1 or x_a.shape != x_b.shape:
        raise ValueError("Need at least one correspondence with matching shapes")

    u, _, vt = np.linalg.svd(e)
    if np.linalg.det(u) < 0:
        u = -u
    if np.linalg.det(vt) < 0:
        vt = -vt
    w = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    t = u[:, 2] / np.linalg.norm(u[:, 2])

    best, best_count = None, 0
    for rotation in (u @ w @ vt, u @ w.T @ vt):
        for translation in (t, -t):
            depth_a, depth_b, valid = _triangulate(rotation, translation, x_a, x_b)
            count = int(np.sum(valid & (depth_a > 0) & (depth_b > 0)))
            if count > best_count:
                best, best_count = (rotation, translation), count

    if best is None:
        raise NoModelError("No decomposition places any point in front of both cameras")
    rotation, translation = best
    # re-orthonormalize against rounding in the SVD products
    ur, _, vtr = np.linalg.svd(rotation)
    return RelativePose(ur @ vtr, translation)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def rotation_error(r_est: np.ndarray, r_gt: np.ndarray) -> float:
    cos = (np.trace(r_gt.T @ r_est) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, cos))))


def translation_error(t_est: np.ndarray, t_gt: np.ndarray) -> float:
    """Angle between directions, sign-agnostic."""
    cos = abs(float(np.dot(t_est, t_gt))) / (np.linalg.norm(t_est) * np.linalg.norm(t_gt))
    return math.degrees(math.acos(min(1.0, cos)))


def pose_error(est: Optional[RelativePose], gt: RelativePose) -> float:
    """max(rotation error, translation direction error) in degrees; a missing estimate scores 180."""
    if est is None:
        return FAILED_POSE_ERROR
    return max(rotation_error(est.rotation, gt.rotation), translation_error(est.translation, gt.translation))


def auc(errors: Sequence[float], thresholds: Sequence[float] = (5.0, 10.0, 20.0)) -> list[float]:
    """
    Exact area under the cumulative error curve up to each threshold,
    normalized to [0, 1]. F(e) = fraction of errors <= e is a right-continuous
    step function, so each error e_i contributes max(0, tau - e_i) / (n tau).
    """
    errors = np.asarray(errors, dtype=np.float64).reshape(-1)
    if errors.size == 0:
        raise ValueError("Cannot compute AUC of an empty error list")
    if np.any(errors < 0) or np.any(np.isnan(errors)):
        raise ValueError("Pose errors must be >= 0")
    results = []
    for tau in thresholds:
        if tau <= 0:
            raise ValueError(f"AUC thresholds must be > 0, got {tau}")
        area = np.maximum(0.0, tau - errors).sum()
        results.append(float(area / (errors.size * tau)))
    return results


def epipolar_precision(x_a: np.ndarray, x_b: np.ndarray, e_gt: np.ndarray, threshold: float) -> float:
    """Fraction of correspondences within `threshold` Sampson distance of the ground-truth geometry."""
    x_a = np.asarray(x_a, dtype=np.float64).reshape(-1, 2)
    if x_a.shape[0] == 0:
        return 0.0
    return float(np.mean(sampson_distance(e_gt, x_a, x_b) < threshold))


def estimate_pose(points_a: np.ndarray, points_b: np.ndarray, k_a: CameraIntrinsics, k_b: CameraIntrinsics,
                  threshold_px: float = 1.0, max_iters: int = 10000, confidence: float = 0.999,
                  seed: int = 0) -> PoseEstimate:
    """Pixel correspondences -> PoseEstimate; the pixel threshold is scaled by the mean focal length."""
    threshold = threshold_px / np.mean([k_a.mean_focal, k_b.mean_focal])
    return ransac_essential(normalize_points(points_a, k_a), normalize_points(points_b, k_b),
                            threshold=threshold, max_iters=max_iters, confidence=confidence, seed=seed)
