# niom/commands/report.py

"""`niom report`: render a run JSON as AUC tables."""

from ..corruptions import CorruptionSide
from ..harness.report import RunReport, write_report
from . import command_handler

_SIDES = {"both": CorruptionSide.BOTH, "a": CorruptionSide.A_ONLY, "b": CorruptionSide.B_ONLY}


def register(subparsers) -> None:
    p = subparsers.add_parser("report", help="AUC tables from a pipeline run")
    p.add_argument("--run", required=True, help="run JSON written by `niom pipeline`")
    p.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=20.0, help="AUC threshold in degrees (5, 10 or 20)")
    p.add_argument("--side", choices=sorted(_SIDES), help="only this protocol")
    p.set_defaults(handler=handle)


@command_handler("Report")
def handle(args) -> int:
    report = RunReport.load(args.run)
    side = _SIDES[args.side].label if args.side else None
    write_report(report, args.format, args.out, threshold=args.threshold, side=side)
    print(f"[Report] {len(report.aggregates)} aggregates -> {args.out}", flush=True)
    return 0
