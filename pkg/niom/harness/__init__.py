"""Benchmark harness: manifests, pair pipeline, reports, rendering and synthetic scenes."""

from .manifest import ManifestError, PairCategory, PairRecord, load_manifest, save_manifest
from .pipeline import RunConfig, run_pipeline, run_suite
from .render import render_matches
from .report import PairResult, RunReport, write_report

__all__ = [
    "ManifestError",
    "PairCategory",
    "PairRecord",
    "load_manifest",
    "save_manifest",
    "RunConfig",
    "run_pipeline",
    "run_suite",
    "render_matches",
    "PairResult",
    "RunReport",
    "write_report",
]
