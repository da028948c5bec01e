# niom/harness/manifest.py

"""
JSON-lines pair manifests.

One PairRecord per line. Relative file paths are resolved against the
manifest's directory; every referenced file must exist at load time.
Ground-truth poses are 12 floats: row-major rotation then translation.
"""

import json
import logging
import os
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ValidationError, field_validator, model_validator

from ..geometry import CameraIntrinsics, RelativePose
from ..heatmap import DetectionBox

logger = logging.getLogger(__name__)


class ManifestError(ValueError):
    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(prefix + message)


class PairCategory(str, Enum):
    SAME_OBJECT = "SameObject"
    SAME_APPEARANCE = "SameAppearance"
    SAME_CLASS = "SameClass"
    CLASS_DISCREPANCY = "ClassDiscrepancy"
    DOMAIN_SHIFT = "DomainShift"


class PairRecord(BaseModel):
    pair_id: str
    image_a: str
    image_b: str
    intrinsics_a: Optional[CameraIntrinsics] = None
    intrinsics_b: Optional[CameraIntrinsics] = None
    gt_pose: Optional[list[float]] = None
    category: PairCategory = PairCategory.SAME_OBJECT
    keypoints_a: Optional[str] = None
    keypoints_b: Optional[str] = None
    heatmaps_a: list[str] = []
    heatmaps_b: list[str] = []
    boxes_a: list[DetectionBox] = []
    boxes_b: list[DetectionBox] = []

    @field_validator("gt_pose")
    @classmethod
    def _check_pose(cls, v):
        if v is not None:
            RelativePose.from_list(v)
        return v

    @field_validator("heatmaps_a", "heatmaps_b", mode="before")
    @classmethod
    def _single_heatmap(cls, v):
        if isinstance(v, str):
            return [v]
        return v

    @model_validator(mode="after")
    def _pose_needs_intrinsics(self):
        if self.gt_pose is not None and (self.intrinsics_a is None or self.intrinsics_b is None):
            raise ValueError(f"Pair {self.pair_id}: gt_pose requires intrinsics_a and intrinsics_b")
        return self

    @property
    def pose(self) -> Optional[RelativePose]:
        if self.gt_pose is None:
            return None
        return RelativePose.from_list(self.gt_pose)

    @property
    def has_ground_truth(self) -> bool:
        return self.gt_pose is not None

    def file_paths(self) -> list[str]:
        paths = [self.image_a, self.image_b, *self.heatmaps_a, *self.heatmaps_b]
        paths += [p for p in (self.keypoints_a, self.keypoints_b) if p]
        return paths

    def resolved(self, base_dir: str) -> "PairRecord":
        def resolve(p):
            return p if os.path.isabs(p) else os.path.normpath(os.path.join(base_dir, p))

        return self.model_copy(update={
            "image_a": resolve(self.image_a),
            "image_b": resolve(self.image_b),
            "keypoints_a": resolve(self.keypoints_a) if self.keypoints_a else None,
            "keypoints_b": resolve(self.keypoints_b) if self.keypoints_b else None,
            "heatmaps_a": [resolve(p) for p in self.heatmaps_a],
            "heatmaps_b": [resolve(p) for p in self.heatmaps_b],
        })


def load_manifest(path: str, require_pose: bool = False) -> list[PairRecord]:
    """
    Parse and validate a manifest. `require_pose` rejects records that cannot
    be pose-evaluated (no gt_pose or intrinsics).
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"No such manifest: {path}")
    base_dir = os.path.dirname(os.path.abspath(path))

    records = []
    seen = set()
    with open(path) as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"malformed JSON ({e.msg})", line_number) from e
            if not isinstance(data, dict):
                raise ManifestError("expected a JSON object", line_number)
            try:
                record = PairRecord.model_validate(data).resolved(base_dir)
            except ValidationError as e:
                raise ManifestError(f"invalid pair record: {e.errors()[0]['msg']}", line_number) from e
            if require_pose and not (record.has_ground_truth and record.intrinsics_a is not None
                                     and record.intrinsics_b is not None):
                raise ManifestError("pose evaluation requires intrinsics_a, intrinsics_b and gt_pose", line_number)

            if record.pair_id in seen:
                raise ManifestError(f"duplicate pair_id {record.pair_id!r}", line_number)
            seen.add(record.pair_id)
            for file_path in record.file_paths():
                if not os.path.exists(file_path):
                    raise ManifestError(f"referenced file does not exist: {file_path}", line_number)
            records.append(record)

    logger.info(f"Loaded {len(records)} pairs from {path}")
    return records


def save_manifest(path: str, records: list[PairRecord]) -> None:
    """Writes records as given; paths are not rewritten."""
    with open(path, "w") as f:
        for record in records:
            f.write(record.model_dump_json(exclude_defaults=True) + "\n")


def load_pair(path: str) -> PairRecord:
    """A single pair record stored as one JSON object; paths resolve against its directory."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"No such pair file: {path}")
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ManifestError(f"{path}: malformed JSON ({e.msg})") from e
    try:
        record = PairRecord.model_validate(data)
    except ValidationError as e:
        raise ManifestError(f"{path}: invalid pair record: {e.errors()[0]['msg']}") from e
    return record.resolved(os.path.dirname(os.path.abspath(path)))
