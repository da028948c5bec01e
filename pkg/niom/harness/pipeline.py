# niom/harness/pipeline.py

"""
Pair pipeline: detect -> heatmap -> weight -> match -> evaluate.

Pairs run on a pool of worker processes capped by NIOM_THREADS. Each pair's
randomness comes from derive_seed(global_seed, pair_id), so results do not
depend on scheduling. A failing pair becomes a flagged record with a 180
degree error.
"""

import logging
import multiprocessing
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from ..config import NIOM_SEED, derive_seed, get_worker_count
from ..corruptions import CorruptionKind, CorruptionSide, CorruptionSpec, PairImages, corrupt_pair
from ..features import DescriptorSet, FeatureConfig, detect_and_describe
from ..formats import read_image
from ..geometry import (FAILED_POSE_ERROR, NoModelError, epipolar_precision, essential_from_pose,
                        estimate_pose, normalize_points, pose_error)
from ..heatmap import Heatmap, aggregate, load_heatmap, synth_heatmap
from ..matching import MatcherConfig, MatcherKind, ScoreKind, match_sets
from ..weighting import WeightMode, weight_descriptors
from .manifest import PairRecord
from .report import CLEAN_LABEL, PairResult, RunReport

logger = logging.getLogger(__name__)


class RunConfig(BaseModel):
    weight_mode: WeightMode = WeightMode.PAPER_NORMALIZED
    matcher: MatcherKind = MatcherKind.MNN
    corruption: Optional[CorruptionSpec] = None
    side: CorruptionSide = CorruptionSide.BOTH

    max_keypoints: int = Field(2048, ge=1)
    nms_radius: float = Field(4.0, ge=0)
    detector_threshold: float = Field(1e-3, ge=0)

    ratio: float = Field(0.95, gt=0, le=1)
    min_similarity: float = 0.5
    dustbin_score: float = 0.0
    temperature: float = Field(0.1, gt=0)
    iterations: int = Field(50, ge=1)
    min_confidence: float = 0.2
    scores: ScoreKind = ScoreKind.SIMILARITY

    ransac_threshold_px: float = Field(1.0, gt=0)
    ransac_max_iters: int = Field(10000, ge=1)
    ransac_confidence: float = Field(0.999, gt=0, lt=1)
    precision_threshold_px: float = Field(3.0, gt=0)

    global_seed: int = NIOM_SEED

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(max_keypoints=self.max_keypoints, nms_radius=self.nms_radius,
                             threshold=self.detector_threshold)

    def matcher_config(self) -> MatcherConfig:
        return MatcherConfig(kind=self.matcher, ratio=self.ratio, min_similarity=self.min_similarity,
                             dustbin_score=self.dustbin_score, temperature=self.temperature,
                             iterations=self.iterations, min_confidence=self.min_confidence,
                             scores=self.scores)

    @property
    def column(self) -> str:
        return f"{self.matcher.value}/{self.weight_mode.label}"


@dataclass(frozen=True)
class PreparedPair:
    """Features and heatmaps of one (possibly corrupted) pair, shared across weight modes and matchers."""
    features_a: DescriptorSet
    features_b: DescriptorSet
    heatmap_a: Heatmap
    heatmap_b: Heatmap
    elapsed_ms: float


# ---------------------------------------------------------------------------
# Per-pair stages
# ---------------------------------------------------------------------------

def _heatmap_for(paths: Sequence[str], boxes, image: np.ndarray) -> Heatmap:
    height, width = image.shape[:2]
    maps = [load_heatmap(p, (width, height)) for p in paths]
    if boxes:
        maps.append(synth_heatmap(boxes, (width, height)))
    if not maps:
        return Heatmap.zeros(width, height)
    return aggregate(maps)


def _features_for(keypoint_path: Optional[str], image: np.ndarray, corrupted: bool,
                  config: FeatureConfig) -> DescriptorSet:
    if keypoint_path and not corrupted:
        return DescriptorSet.load(keypoint_path)
    if keypoint_path:
        logger.debug(f"Ignoring {keypoint_path}: image is corrupted, detecting on the corrupted image")
    return detect_and_describe(image, config)


def prepare_pair(record: PairRecord, config: RunConfig, clean: Optional[PreparedPair] = None) -> PreparedPair:
    """
    `clean` is the uncorrupted preparation of the same pair under the same
    feature settings. A side the corruption leaves untouched reuses it.
    """
    start = time.perf_counter()
    images = PairImages(record.pair_id, read_image(record.image_a), read_image(record.image_b))
    corrupted_a = corrupted_b = False
    if config.corruption is not None and config.corruption.severity > 0:
        images = corrupt_pair(images, config.corruption, config.side)
        corrupted_a = config.side in (CorruptionSide.BOTH, CorruptionSide.A_ONLY)
        corrupted_b = config.side in (CorruptionSide.BOTH, CorruptionSide.B_ONLY)

    feature_config = config.feature_config()
    if clean is not None and not corrupted_a:
        features_a, heatmap_a = clean.features_a, clean.heatmap_a
    else:
        features_a = _features_for(record.keypoints_a, images.image_a, corrupted_a, feature_config)
        heatmap_a = _heatmap_for(record.heatmaps_a, record.boxes_a, images.image_a)
    if clean is not None and not corrupted_b:
        features_b, heatmap_b = clean.features_b, clean.heatmap_b
    else:
        features_b = _features_for(record.keypoints_b, images.image_b, corrupted_b, feature_config)
        heatmap_b = _heatmap_for(record.heatmaps_b, record.boxes_b, images.image_b)
    elapsed = (time.perf_counter() - start) * 1000.0
    return PreparedPair(features_a, features_b, heatmap_a, heatmap_b, elapsed)


def _corruption_label(config: RunConfig) -> str:
    if config.corruption is None:
        return CLEAN_LABEL
    return config.corruption.kind.label


def evaluate_pair(record: PairRecord, prepared: PreparedPair, config: RunConfig) -> PairResult:
    start = time.perf_counter()
    set_a = weight_descriptors(prepared.features_a, prepared.heatmap_a, config.weight_mode)
    set_b = weight_descriptors(prepared.features_b, prepared.heatmap_b, config.weight_mode)
    matches = match_sets(set_a, set_b, config.matcher_config())

    result = dict(
        pair_id=record.pair_id,
        category=record.category.value,
        corruption=_corruption_label(config),
        severity=config.corruption.severity if config.corruption else 0,
        side=config.side.label,
        column=config.column,
        num_keypoints_a=len(set_a),
        num_keypoints_b=len(set_b),
        num_matches=len(matches),
    )

    if record.has_ground_truth:
        points_a = set_a.positions[matches.index_a]
        points_b = set_b.positions[matches.index_b]
        result.update(_evaluate_pose(record, points_a, points_b, config))

    elapsed = prepared.elapsed_ms + (time.perf_counter() - start) * 1000.0
    return PairResult(time_ms=elapsed, **result)


def _evaluate_pose(record: PairRecord, points_a: np.ndarray, points_b: np.ndarray, config: RunConfig) -> dict:
    gt = record.pose
    k_a, k_b = record.intrinsics_a, record.intrinsics_b
    threshold = config.precision_threshold_px / np.mean([k_a.mean_focal, k_b.mean_focal])
    precision = epipolar_precision(normalize_points(points_a, k_a), normalize_points(points_b, k_b),
                                   essential_from_pose(gt), threshold)
    try:
        estimate = estimate_pose(points_a, points_b, k_a, k_b,
                                 threshold_px=config.ransac_threshold_px,
                                 max_iters=config.ransac_max_iters,
                                 confidence=config.ransac_confidence,
                                 seed=derive_seed(config.global_seed, record.pair_id))
    except (NoModelError, ValueError) as e:
        logger.info(f"Pair {record.pair_id}: no pose ({e})")
        return dict(pose_error=FAILED_POSE_ERROR, precision=precision, inlier_ratio=0.0,
                    status="no_model", message=str(e))
    return dict(pose_error=pose_error(estimate.pose, gt), precision=precision,
                inlier_ratio=estimate.inlier_ratio, status="ok")


def _failed_result(record: PairRecord, config: RunConfig, error: Exception, elapsed_ms: float) -> PairResult:
    return PairResult(
        pair_id=record.pair_id,
        category=record.category.value,
        corruption=_corruption_label(config),
        severity=config.corruption.severity if config.corruption else 0,
        side=config.side.label,
        column=config.column,
        pose_error=FAILED_POSE_ERROR if record.has_ground_truth else None,
        time_ms=elapsed_ms,
        status="error",
        flagged=True,
        message=f"{type(error).__name__}: {error}",
    )


def process_pair(record: PairRecord, config: RunConfig) -> PairResult:
    """Never raises: any exception becomes a flagged record."""
    start = time.perf_counter()
    try:
        return evaluate_pair(record, prepare_pair(record, config), config)
    except Exception as e:
        logger.error(f"Pair {record.pair_id} failed: {type(e).__name__}: {e}")
        logger.debug(traceback.format_exc())
        return _failed_result(record, config, e, (time.perf_counter() - start) * 1000.0)


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

def _map_pairs(fn, pairs: Sequence[PairRecord], workers: Optional[int]) -> list:
    """`fn` must be picklable: a module-level function or a partial of one."""
    workers = workers or get_worker_count()
    workers = max(1, min(workers, len(pairs)))
    if workers == 1:
        return [fn(p) for p in pairs]
    context = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=workers, mp_context=context) as pool:
        return list(pool.map(fn, pairs))


def _in_submission_order(results: Sequence[PairResult]) -> list[PairResult]:
    return [r.model_copy(update={"sequence": i}) for i, r in enumerate(results)]


def run_pipeline(pairs: Sequence[PairRecord], config: RunConfig, workers: Optional[int] = None) -> RunReport:
    if not pairs:
        raise ValueError("run_pipeline needs at least one pair")
    logger.info(f"Running {len(pairs)} pairs ({config.column}, corruption={_corruption_label(config)})")
    results = _map_pairs(partial(process_pair, config=config), pairs, workers)
    return RunReport.from_records(_in_submission_order(results))


def suite_configs(base_config: RunConfig, kinds: Sequence[CorruptionKind], severity: int,
                  protocols: Sequence[CorruptionSide]) -> list[RunConfig]:
    """The clean configuration followed by one configuration per (protocol, kind)."""
    configs = [base_config.model_copy(update={"corruption": None, "side": CorruptionSide.BOTH})]
    seed = base_config.corruption.seed if base_config.corruption else 0
    for side in protocols:
        for kind in kinds:
            spec = CorruptionSpec(kind=kind, severity=severity, seed=seed)
            configs.append(base_config.model_copy(update={"corruption": spec, "side": CorruptionSide(side)}))
    return configs


def _suite_pair(record: PairRecord, configs: Sequence[RunConfig], columns: Sequence[tuple],
                protocols: Sequence[CorruptionSide]) -> list[PairResult]:
    """Every configuration and column for one pair. configs[0] is the clean one."""
    out = []
    clean = None
    for config in configs:
        try:
            prepared = prepare_pair(record, config, clean=clean)
        except Exception as e:
            logger.error(f"Pair {record.pair_id} failed to prepare: {type(e).__name__}: {e}")
            prepared = e
        if config.corruption is None and not isinstance(prepared, Exception):
            clean = prepared
        for matcher, mode in columns:
            column_config = config.model_copy(update={"matcher": matcher, "weight_mode": mode})
            if isinstance(prepared, Exception):
                out.extend(_clean_rows(_failed_result(record, column_config, prepared, 0.0), config, protocols))
                continue
            start = time.perf_counter()
            try:
                result = evaluate_pair(record, prepared, column_config)
            except Exception as e:
                logger.error(f"Pair {record.pair_id} failed: {type(e).__name__}: {e}")
                result = _failed_result(record, column_config, e, (time.perf_counter() - start) * 1000.0)
            out.extend(_clean_rows(result, config, protocols))
    return out


def run_suite(pairs: Sequence[PairRecord], base_config: RunConfig, kinds: Sequence[CorruptionKind],
              modes: Sequence[WeightMode], matchers: Sequence[MatcherKind] = (MatcherKind.MNN,),
              protocols: Sequence[CorruptionSide] = (CorruptionSide.BOTH, CorruptionSide.A_ONLY),
              severity: int = 5, workers: Optional[int] = None) -> RunReport:
    """
    Clean run plus every (protocol, corruption kind), each evaluated for
    every (matcher, weight mode) column. Features of one prepared pair are
    reused across columns, and the clean features of a pair are reused for
    the side a protocol leaves uncorrupted. The clean rows are stored under
    each protocol.
    """
    if not pairs:
        raise ValueError("run_suite needs at least one pair")
    configs = suite_configs(base_config, kinds, severity, protocols)
    columns = [(MatcherKind(m), WeightMode(w)) for m in matchers for w in modes]
    protocols = [CorruptionSide(side) for side in protocols]
    logger.info(f"Suite: {len(pairs)} pairs x {len(configs)} configurations x {len(columns)} columns")

    fn = partial(_suite_pair, configs=configs, columns=columns, protocols=protocols)
    nested = _map_pairs(fn, pairs, workers)
    return RunReport.from_records(_in_submission_order([r for group in nested for r in group]))


def _clean_rows(result: PairResult, config: RunConfig, protocols: Sequence[CorruptionSide]) -> list[PairResult]:
    """A clean result is listed once under every protocol so each table carries its reference row."""
    if config.corruption is not None:
        return [result]
    return [result.model_copy(update={"side": CorruptionSide(side).label}) for side in protocols]
