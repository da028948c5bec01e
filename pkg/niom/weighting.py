"""
Heatmap-derived keypoint weights.

    PaperNormalized       alpha_i = (1 + H_i) / max_j (1 + H_j)   in [0.5, 1]
    RawHeatmap            alpha_i = H_i
    UnnormalizedPlusOne   alpha_i = 1 + H_i
    None                  alpha_i = 1

H_i is the heatmap sampled at keypoint i. The max is taken over one image's
keypoints, never across the pair.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .features import DescriptorSet
from .formats import read_niok, write_niok
from .heatmap import Heatmap, sample_points

logger = logging.getLogger(__name__)


class WeightMode(str, Enum):
    PAPER_NORMALIZED = "paper"
    RAW_HEATMAP = "raw"
    UNNORMALIZED_PLUS_ONE = "plus-one"
    NONE = "none"

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    WeightMode.PAPER_NORMALIZED: "PaperNormalized",
    WeightMode.RAW_HEATMAP: "RawHeatmap",
    WeightMode.UNNORMALIZED_PLUS_ONE: "UnnormalizedPlusOne",
    WeightMode.NONE: "None",
}


@dataclass(frozen=True)
class WeightedDescriptorSet:
    positions: np.ndarray
    descriptors: np.ndarray
    weights: np.ndarray
    weighted: np.ndarray
    responses: Optional[np.ndarray] = None

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        n = positions.shape[0]
        descriptors = np.asarray(self.descriptors, dtype=np.float64)
        weighted = np.asarray(self.weighted, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if descriptors.ndim != 2 or descriptors.shape[0] != n:
            raise ValueError(f"Expected {n} descriptors, got shape {descriptors.shape}")
        if weighted.shape != descriptors.shape:
            raise ValueError(f"Weighted descriptors {weighted.shape} do not match descriptors {descriptors.shape}")
        if weights.shape[0] != n:
            raise ValueError(f"Expected {n} weights, got {weights.shape[0]}")
        responses = np.zeros(n) if self.responses is None else np.asarray(self.responses, dtype=np.float64).reshape(n)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "descriptors", descriptors)
        object.__setattr__(self, "weighted", weighted)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "responses", responses)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]

    @classmethod
    def unweighted(cls, features: DescriptorSet) -> "WeightedDescriptorSet":
        n = len(features)
        return cls(features.positions, features.descriptors, np.ones(n),
                   features.descriptors.copy(), features.responses)

    @classmethod
    def load(cls, path: str) -> "WeightedDescriptorSet":
        """
        NIOK with a weights column stores weighted descriptors; the unweighted
        ones are recovered by division (zero-weight rows recover as zeros).
        Files without the column load with unit weights.
        """
        kf = read_niok(path)
        if kf.weights is None:
            return cls(kf.positions, kf.descriptors, np.ones(len(kf.positions)),
                       kf.descriptors.copy(), kf.responses)
        weights = kf.weights
        safe = np.where(weights > 0, weights, 1.0)
        raw = np.where(weights[:, None] > 0, kf.descriptors / safe[:, None], 0.0)
        return cls(kf.positions, raw, weights, kf.descriptors, kf.responses)

    def save(self, path: str) -> None:
        write_niok(path, self.positions, self.responses, self.weighted, self.weights)


def compute_weights(positions: np.ndarray, h: Heatmap, mode: WeightMode) -> np.ndarray:
    mode = WeightMode(mode)
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    n = positions.shape[0]
    if n == 0:
        return np.zeros(0)
    if mode is WeightMode.NONE:
        return np.ones(n)

    samples = sample_points(h, positions)
    if not np.all(np.isfinite(samples)):
        raise ValueError("Heatmap produced non-finite samples")

    if mode is WeightMode.RAW_HEATMAP:
        return samples
    if mode is WeightMode.UNNORMALIZED_PLUS_ONE:
        return 1.0 + samples
    # all-equal samples give exactly 1.0, so an empty heatmap degenerates to NONE
    boosted = 1.0 + samples
    return boosted / boosted.max()


def apply_weights(descriptors: np.ndarray, weights: np.ndarray) -> np.ndarray:
    descriptors = np.asarray(descriptors, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if descriptors.ndim != 2:
        descriptors = descriptors.reshape(len(weights), -1)
    if descriptors.shape[0] != weights.shape[0]:
        raise ValueError(f"Length mismatch: {descriptors.shape[0]} descriptors, {weights.shape[0]} weights")
    if not np.all(np.isfinite(weights)) or np.any(weights < 0):
        raise ValueError("Weights must be finite and >= 0")
    return descriptors * weights[:, None]


def weight_descriptors(features: DescriptorSet, h: Heatmap, mode: WeightMode) -> WeightedDescriptorSet:
    """compute_weights + apply_weights, keeping the weights for later inspection."""
    weights = compute_weights(features.positions, h, mode)
    weighted = apply_weights(features.descriptors, weights)
    if len(features):
        logger.debug(f"Weighted {len(features)} keypoints ({WeightMode(mode).value}): "
                     f"alpha in [{weights.min():.3f}, {weights.max():.3f}]")
    return WeightedDescriptorSet(features.positions, features.descriptors, weights,
                                 weighted, features.responses)
