# niom/harness/report.py

"""
Run reports: per-pair records, aggregates, and tables in the layout of the
robustness tables (one row per corruption, Average and time rows, one column
per matcher/weight-mode combination).
"""

import csv
import io
import json
import logging
import os
from collections import defaultdict
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from .. import __version__
from ..corruptions import CorruptionKind, CorruptionSide
from ..geometry import auc

logger = logging.getLogger(__name__)

CLEAN_LABEL = "None (Clean)"
AVERAGE_LABEL = "Average"
TIME_LABEL = "Time per pair [msec.]"
DEFAULT_THRESHOLDS = (5.0, 10.0, 20.0)

_ROW_ORDER = [CLEAN_LABEL] + [kind.label for kind in CorruptionKind]
_SIDE_ORDER = [side.label for side in CorruptionSide]


class PairResult(BaseModel):
    pair_id: str
    category: str = "SameObject"
    corruption: str = CLEAN_LABEL
    severity: int = 0
    side: str = "Both"
    column: str = "mnn/PaperNormalized"
    num_keypoints_a: int = 0
    num_keypoints_b: int = 0
    num_matches: int = 0
    pose_error: Optional[float] = None
    precision: Optional[float] = None
    inlier_ratio: Optional[float] = None
    time_ms: float = Field(0.0, ge=0)
    status: str = "ok"
    flagged: bool = False
    message: Optional[str] = None
    sequence: Optional[int] = None


class AggregateRow(BaseModel):
    side: str
    corruption: str
    column: str
    auc: dict[str, Optional[float]]
    mean_matches: float
    mean_precision: Optional[float] = None
    median_time_ms: float
    num_pairs: int
    num_flagged: int


def _threshold_key(t: float) -> str:
    return f"{t:g}"


def _row_rank(label: str) -> int:
    return _ROW_ORDER.index(label) if label in _ROW_ORDER else len(_ROW_ORDER)


def _side_rank(label: str) -> int:
    return _SIDE_ORDER.index(label) if label in _SIDE_ORDER else len(_SIDE_ORDER)


def median_time(times: Sequence[float], order: Optional[Sequence[int]] = None) -> float:
    """
    Median wall time after dropping the warm-up pair: the entry with the
    lowest `order` (execution position), or the first entry without one.
    """
    if not times:
        return 0.0
    if len(times) == 1:
        return float(times[0])
    warmup = int(np.argmin(order)) if order is not None else 0
    measured = [t for i, t in enumerate(times) if i != warmup]
    return float(np.median(measured))


class RunReport(BaseModel):
    version: str = __version__
    thresholds: list[float] = list(DEFAULT_THRESHOLDS)
    records: list[PairResult] = []
    aggregates: list[AggregateRow] = []

    @classmethod
    def from_records(cls, records: Sequence[PairResult],
                     thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> "RunReport":
        ordered = sorted(records, key=lambda r: (_side_rank(r.side), _row_rank(r.corruption), r.corruption,
                                                 r.column, r.pair_id))
        report = cls(thresholds=list(thresholds), records=ordered)
        report.aggregates = report.recompute()
        return report

    def recompute(self) -> list[AggregateRow]:
        groups = defaultdict(list)
        for record in self.records:
            groups[(record.side, record.corruption, record.column)].append(record)

        rows = []
        for (side, corruption, column), group in groups.items():
            errors = [r.pose_error for r in group if r.pose_error is not None]
            values = auc(errors, self.thresholds) if errors else [None] * len(self.thresholds)
            precisions = [r.precision for r in group if r.precision is not None]
            rows.append(AggregateRow(
                side=side,
                corruption=corruption,
                column=column,
                auc={_threshold_key(t): v for t, v in zip(self.thresholds, values)},
                mean_matches=float(np.mean([r.num_matches for r in group])),
                mean_precision=float(np.mean(precisions)) if precisions else None,
                median_time_ms=median_time([r.time_ms for r in group],
                                           [r.sequence if r.sequence is not None else i for i, r in enumerate(group)]),
                num_pairs=len(group),
                num_flagged=sum(r.flagged for r in group),
            ))
        return rows

    # -- views -------------------------------------------------------------

    def sides(self) -> list[str]:
        return sorted({a.side for a in self.aggregates}, key=_side_rank)

    def columns(self) -> list[str]:
        seen = []
        for a in self.aggregates:
            if a.column not in seen:
                seen.append(a.column)
        return seen

    def corruptions(self, side: str) -> list[str]:
        return sorted({a.corruption for a in self.aggregates if a.side == side}, key=lambda c: (_row_rank(c), c))

    def lookup(self, side: str, corruption: str, column: str) -> Optional[AggregateRow]:
        for a in self.aggregates:
            if (a.side, a.corruption, a.column) == (side, corruption, column):
                return a
        return None

    def category_breakdown(self) -> dict[str, dict[str, float]]:
        """Mean matches per pair category, per column."""
        grouped = defaultdict(lambda: defaultdict(list))
        for r in self.records:
            grouped[r.column][r.category].append(r.num_matches)
        return {column: {cat: float(np.mean(v)) for cat, v in cats.items()} for column, cats in grouped.items()}

    # -- persistence -------------------------------------------------------

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            f.write(self.model_dump_json(indent=2))

    @classmethod
    def load(cls, path: str) -> "RunReport":
        if not os.path.exists(path):
            raise FileNotFoundError(f"No such run file: {path}")
        with open(path) as f:
            return cls.model_validate(json.load(f))


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

def table_rows(report: RunReport, side: str, threshold: float = 20.0) -> list[list]:
    """
    [label, value per column] rows: corruption rows (AUC percent), Average
    over the corruption rows (the clean row is excluded unless it is the only
    row), and the time row. Missing values are None.
    """
    key = _threshold_key(threshold)
    if key not in {_threshold_key(t) for t in report.thresholds}:
        raise ValueError(f"Report has no AUC@{threshold}; available: {report.thresholds}")
    columns = report.columns()
    labels = report.corruptions(side)

    rows = []
    for label in labels:
        row = [label]
        for column in columns:
            agg = report.lookup(side, label, column)
            value = agg.auc.get(key) if agg else None
            row.append(None if value is None else 100.0 * value)
        rows.append(row)

    averaged = [r for r in rows if r[0] != CLEAN_LABEL] or rows
    average = [AVERAGE_LABEL]
    for i in range(len(columns)):
        values = [r[i + 1] for r in averaged if r[i + 1] is not None]
        average.append(float(np.mean(values)) if values else None)
    rows.append(average)

    timing = [TIME_LABEL]
    for column in columns:
        medians = [a.median_time_ms for a in report.aggregates if a.side == side and a.column == column]
        timing.append(float(np.median(medians)) if medians else None)
    rows.append(timing)
    return rows


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.2f}"


def render_markdown(report: RunReport, threshold: float = 20.0, side: Optional[str] = None) -> str:
    columns = report.columns()
    out = []
    for s in ([side] if side else report.sides()):
        out.append(f"### {s} (AUC@{threshold:g}°, %)")
        out.append("")
        out.append("| Corruption | " + " | ".join(columns) + " |")
        out.append("|---|" + "---|" * len(columns))
        for row in table_rows(report, s, threshold):
            out.append(f"| {row[0]} | " + " | ".join(_fmt(v) for v in row[1:]) + " |")
        out.append("")

    breakdown = report.category_breakdown()
    categories = sorted({c for cats in breakdown.values() for c in cats})
    if categories:
        out.append("### Mean matches per category")
        out.append("")
        out.append("| Column | " + " | ".join(categories) + " |")
        out.append("|---|" + "---|" * len(categories))
        for column in columns:
            out.append(f"| {column} | " + " | ".join(_fmt(breakdown.get(column, {}).get(c)) for c in categories) + " |")
        out.append("")
    out.append("Timings are CPU wall-clock medians after one warm-up pair.")
    return "\n".join(out) + "\n"


def render_csv(report: RunReport, threshold: float = 20.0, side: Optional[str] = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["protocol", "corruption"] + report.columns())
    for s in ([side] if side else report.sides()):
        for row in table_rows(report, s, threshold):
            writer.writerow([s, row[0]] + ["" if v is None else f"{v:.2f}" for v in row[1:]])
    return buf.getvalue()


def write_report(report: RunReport, fmt: str, out_path: str, threshold: float = 20.0,
                 side: Optional[str] = None) -> None:
    if fmt == "markdown":
        text = render_markdown(report, threshold, side)
    elif fmt == "csv":
        text = render_csv(report, threshold, side)
    else:
        raise ValueError(f"Unknown report format: {fmt!r} (expected markdown or csv)")
    with open(out_path, "w", encoding="utf-8") as f:
        f.write(text)
    logger.info(f"Wrote {fmt} report to {out_path}")
