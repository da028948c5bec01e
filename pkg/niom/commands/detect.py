# niom/commands/detect.py

"""`niom detect`: Harris keypoints + descriptors of one image, written as NIOK."""

from ..features import FeatureConfig, detect_and_describe
from ..formats import read_image
from . import command_handler


def register(subparsers) -> None:
    p = subparsers.add_parser("detect", help="detect and describe keypoints of an image")
    p.add_argument("--image", required=True, help="input PNG/PGM image")
    p.add_argument("--out", required=True, help="output NIOK file")
    p.add_argument("--max-keypoints", type=int, default=2048)
    p.add_argument("--nms-radius", type=float, default=4.0)
    p.add_argument("--threshold", type=float, default=1e-3, help="minimum Harris response")
    p.set_defaults(handler=handle)


@command_handler("Detect")
def handle(args) -> int:
    config = FeatureConfig(max_keypoints=args.max_keypoints, nms_radius=args.nms_radius,
                           threshold=args.threshold)
    features = detect_and_describe(read_image(args.image), config)
    features.save(args.out)
    print(f"[Detect] {len(features)} keypoints -> {args.out}", flush=True)
    return 0
