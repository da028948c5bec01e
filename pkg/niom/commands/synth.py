# niom/commands/synth.py

"""`niom synth`: render the synthetic benchmark (images, heatmaps, manifest.jsonl)."""

import os

from ..harness.manifest import PairCategory
from ..harness.scenes import BENCHMARK_PAIRS, IMAGE_HEIGHT, IMAGE_WIDTH, build_benchmark
from . import command_handler


def register(subparsers) -> None:
    p = subparsers.add_parser("synth", help="generate synthetic pairs with ground-truth poses")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--pairs", type=int, default=BENCHMARK_PAIRS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=IMAGE_WIDTH)
    p.add_argument("--height", type=int, default=IMAGE_HEIGHT)
    p.add_argument("--categories", help="comma-separated categories assigned round-robin (default: SameObject)")
    p.set_defaults(handler=handle)


@command_handler("Synth")
def handle(args) -> int:
    categories = None
    if args.categories:
        categories = [PairCategory(c.strip()) for c in args.categories.split(",") if c.strip()]
    records = build_benchmark(args.out, n_pairs=args.pairs, seed=args.seed, categories=categories,
                              width=args.width, height=args.height)
    print(f"[Synth] {len(records)} pairs -> {os.path.join(args.out, 'manifest.jsonl')}", flush=True)
    return 0
