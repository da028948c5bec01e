# niom/commands/corrupt.py

"""`niom corrupt`: apply one common corruption to an image or a pair of images."""

import os

from ..corruptions import CorruptionKind, CorruptionSide, CorruptionSpec, PairImages, corrupt, corrupt_pair
from ..formats import read_image, write_image
from . import command_handler

_SIDES = {"both": CorruptionSide.BOTH, "a": CorruptionSide.A_ONLY, "b": CorruptionSide.B_ONLY}


def register(subparsers) -> None:
    p = subparsers.add_parser("corrupt", help="apply a corruption at a given severity")
    p.add_argument("--kind", required=True, help="corruption kind, e.g. gaussian_noise or 'Motion Blur'")
    p.add_argument("--severity", type=int, required=True, help="0 (identity) to 5")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--side", choices=sorted(_SIDES), default="both")
    p.add_argument("--in-a", required=True, help="image A")
    p.add_argument("--in-b", help="image B (pair mode)")
    p.add_argument("--out-a", required=True)
    p.add_argument("--out-b")
    p.add_argument("--pair-id", help="pair id for per-image seed derivation (default: stem of image A)")
    p.set_defaults(handler=handle)


@command_handler("Corrupt")
def handle(args) -> int:
    spec = CorruptionSpec(kind=CorruptionKind.parse(args.kind), severity=args.severity, seed=args.seed)
    side = _SIDES[args.side]

    if args.in_b is None:
        if side is CorruptionSide.B_ONLY:
            raise ValueError("--side b needs --in-b")
        if args.out_b:
            raise ValueError("--out-b given without --in-b")
        write_image(args.out_a, corrupt(read_image(args.in_a), spec))
        print(f"[Corrupt] {spec.kind.label} severity {spec.severity} -> {args.out_a}", flush=True)
        return 0

    if not args.out_b:
        raise ValueError("--in-b needs --out-b")
    pair_id = args.pair_id or os.path.splitext(os.path.basename(args.in_a))[0]
    pair = PairImages(pair_id, read_image(args.in_a), read_image(args.in_b))
    out = corrupt_pair(pair, spec, side)
    write_image(args.out_a, out.image_a)
    write_image(args.out_b, out.image_b)
    print(f"[Corrupt] {spec.kind.label} severity {spec.severity} ({side.label}) -> {args.out_a}, {args.out_b}",
          flush=True)
    return 0
