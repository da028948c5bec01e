# niom/commands/viz.py

"""`niom viz`: side-by-side match visualization."""

from ..formats import read_image, read_niok
from ..harness.render import render_matches
from ..matching import MatchSet
from . import command_handler


def register(subparsers) -> None:
    p = subparsers.add_parser("viz", help="draw matches between two images")
    p.add_argument("--image-a", required=True)
    p.add_argument("--image-b", required=True)
    p.add_argument("--a", required=True, help="NIOK file of image A")
    p.add_argument("--b", required=True, help="NIOK file of image B")
    p.add_argument("--matches", required=True, help="matches CSV")
    p.add_argument("--out", required=True, help="output PNG")
    p.set_defaults(handler=handle)


@command_handler("Viz")
def handle(args) -> int:
    matches = MatchSet.load_csv(args.matches)
    render_matches(read_image(args.image_a), read_image(args.image_b),
                   read_niok(args.a).positions, read_niok(args.b).positions,
                   matches, args.out)
    print(f"[Viz] {len(matches)} matches -> {args.out}", flush=True)
    return 0
