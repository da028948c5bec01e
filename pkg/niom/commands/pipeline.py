# niom/commands/pipeline.py

"""`niom pipeline`: run a manifest through detect -> weight -> match -> evaluate."""

import time

from ..config import NIOM_SEED, get_worker_count
from ..corruptions import CorruptionKind, CorruptionSide, CorruptionSpec
from ..harness.manifest import load_manifest
from ..harness.pipeline import RunConfig, run_pipeline, run_suite
from ..matching import MatcherKind, ScoreKind
from ..weighting import WeightMode
from . import command_handler

_SIDES = {"both": CorruptionSide.BOTH, "a": CorruptionSide.A_ONLY, "b": CorruptionSide.B_ONLY}


def _csv_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def register(subparsers) -> None:
    p = subparsers.add_parser("pipeline", help="evaluate a manifest of pairs")
    p.add_argument("--manifest", required=True, help="JSON-lines manifest")
    p.add_argument("--out", required=True, help="output run JSON")
    p.add_argument("--workers", type=int, help="worker cap (default: NIOM_THREADS or CPU count)")
    p.add_argument("--seed", type=int, default=NIOM_SEED, help="global seed")

    p.add_argument("--mode", choices=[m.value for m in WeightMode], default=WeightMode.PAPER_NORMALIZED.value)
    p.add_argument("--matcher", choices=[k.value for k in MatcherKind], default=MatcherKind.MNN.value)
    p.add_argument("--scores", choices=[s.value for s in ScoreKind], default=ScoreKind.SIMILARITY.value)
    p.add_argument("--corruption", help="corruption kind (single run)")
    p.add_argument("--severity", type=int, default=5)
    p.add_argument("--corruption-seed", type=int, default=0)
    p.add_argument("--side", choices=sorted(_SIDES), default="both")

    p.add_argument("--max-keypoints", type=int, default=2048)
    p.add_argument("--nms-radius", type=float, default=4.0)
    p.add_argument("--detector-threshold", type=float, default=1e-3)
    p.add_argument("--ratio", type=float, default=0.95)
    p.add_argument("--min-sim", type=float, default=0.5)
    p.add_argument("--dustbin", type=float, default=0.0)
    p.add_argument("--temperature", type=float, default=0.1)
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--min-confidence", type=float, default=0.2)
    p.add_argument("--ransac-threshold", type=float, default=1.0, help="pixels")
    p.add_argument("--ransac-max-iters", type=int, default=10000)
    p.add_argument("--precision-threshold", type=float, default=3.0, help="pixels, for match precision")

    p.add_argument("--suite", action="store_true", help="clean run plus every corruption kind and protocol")
    p.add_argument("--kinds", help="comma-separated corruption kinds for --suite (default: all)")
    p.add_argument("--modes", default="paper,none", help="comma-separated weight modes for --suite")
    p.add_argument("--matchers", default="mnn", help="comma-separated matchers for --suite")
    p.add_argument("--protocols", default="both,a", help="comma-separated sides for --suite")
    p.set_defaults(handler=handle)


def _run_config(args) -> RunConfig:
    corruption = None
    if args.corruption:
        corruption = CorruptionSpec(kind=CorruptionKind.parse(args.corruption), severity=args.severity,
                                    seed=args.corruption_seed)
    return RunConfig(
        weight_mode=WeightMode(args.mode),
        matcher=MatcherKind(args.matcher),
        scores=ScoreKind(args.scores),
        corruption=corruption,
        side=_SIDES[args.side],
        max_keypoints=args.max_keypoints,
        nms_radius=args.nms_radius,
        detector_threshold=args.detector_threshold,
        ratio=args.ratio,
        min_similarity=args.min_sim,
        dustbin_score=args.dustbin,
        temperature=args.temperature,
        iterations=args.iterations,
        min_confidence=args.min_confidence,
        ransac_threshold_px=args.ransac_threshold,
        ransac_max_iters=args.ransac_max_iters,
        precision_threshold_px=args.precision_threshold,
        global_seed=args.seed,
    )


@command_handler("Pipeline")
def handle(args) -> int:
    pairs = load_manifest(args.manifest)
    if not pairs:
        raise ValueError(f"Manifest {args.manifest} has no pairs")
    config = _run_config(args)
    workers = args.workers or get_worker_count()
    print(f"[Pipeline] {len(pairs)} pairs, {workers} workers", flush=True)

    start = time.perf_counter()
    if args.suite:
        kinds = [CorruptionKind.parse(k) for k in _csv_list(args.kinds)] if args.kinds else list(CorruptionKind)
        report = run_suite(
            pairs, config, kinds,
            modes=[WeightMode(m) for m in _csv_list(args.modes)],
            matchers=[MatcherKind(m) for m in _csv_list(args.matchers)],
            protocols=[_SIDES[s] for s in _csv_list(args.protocols)],
            severity=args.severity,
            workers=workers,
        )
    else:
        report = run_pipeline(pairs, config, workers=workers)

    report.save(args.out)
    flagged = sum(r.flagged for r in report.records)
    print(f"[Pipeline] {len(report.records)} records ({flagged} flagged) in "
          f"{time.perf_counter() - start:.1f}s -> {args.out}", flush=True)
    return 0
