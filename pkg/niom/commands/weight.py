# niom/commands/weight.py

"""`niom weight`: semantic weighting of a keypoint file by a heatmap."""

from ..features import DescriptorSet
from ..formats import read_image
from ..heatmap import load_heatmap
from ..weighting import WeightMode, weight_descriptors
from . import command_handler


def register(subparsers) -> None:
    p = subparsers.add_parser("weight", help="weight descriptors by a semantic heatmap")
    p.add_argument("--mode", choices=[m.value for m in WeightMode], default=WeightMode.PAPER_NORMALIZED.value)
    p.add_argument("--keypoints", required=True, help="input NIOK file")
    p.add_argument("--heatmap", required=True, help="NIOH or PGM heatmap")
    p.add_argument("--image", help="resample the heatmap to this image's size first")
    p.add_argument("--out", required=True, help="output NIOK with weighted descriptors and weights column")
    p.set_defaults(handler=handle)


@command_handler("Weight")
def handle(args) -> int:
    features = DescriptorSet.load(args.keypoints)
    size = None
    if args.image:
        height, width = read_image(args.image).shape[:2]
        size = (width, height)
    weighted = weight_descriptors(features, load_heatmap(args.heatmap, size), WeightMode(args.mode))
    weighted.save(args.out)
    if len(weighted):
        print(f"[Weight] {len(weighted)} keypoints ({weighted.weights.min():.3f} <= alpha <= "
              f"{weighted.weights.max():.3f}) -> {args.out}", flush=True)
    else:
        print(f"[Weight] no keypoints -> {args.out}", flush=True)
    return 0
