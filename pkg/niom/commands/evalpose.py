# niom/commands/evalpose.py

"""`niom evalpose`: relative pose error of one matched pair, in degrees (180 on failure)."""

import logging

from ..formats import read_niok
from ..geometry import FAILED_POSE_ERROR, NoModelError, estimate_pose, pose_error
from ..harness.manifest import load_pair
from ..matching import MatchSet
from . import command_handler

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    p = subparsers.add_parser("evalpose", help="estimate the relative pose from matches and score it")
    p.add_argument("--matches", required=True, help="matches CSV")
    p.add_argument("--pair", required=True, help="pair record JSON with intrinsics and gt_pose")
    p.add_argument("--a", help="NIOK file of image A (default: keypoints_a of the pair)")
    p.add_argument("--b", help="NIOK file of image B (default: keypoints_b of the pair)")
    p.add_argument("--threshold", type=float, default=1.0, help="RANSAC threshold in pixels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=10000)
    p.set_defaults(handler=handle)


@command_handler("EvalPose")
def handle(args) -> int:
    record = load_pair(args.pair)
    if not record.has_ground_truth:
        raise ValueError(f"Pair {record.pair_id} has no gt_pose")
    path_a, path_b = args.a or record.keypoints_a, args.b or record.keypoints_b
    if not path_a or not path_b:
        raise ValueError("Keypoint files are needed: pass --a/--b or set keypoints_a/b in the pair")

    positions_a = read_niok(path_a).positions
    positions_b = read_niok(path_b).positions
    matches = MatchSet.load_csv(args.matches)
    if len(matches) and (matches.index_a.max() >= len(positions_a) or matches.index_b.max() >= len(positions_b)):
        raise ValueError("Match indices exceed the keypoint files")

    try:
        estimate = estimate_pose(positions_a[matches.index_a], positions_b[matches.index_b],
                                 record.intrinsics_a, record.intrinsics_b, threshold_px=args.threshold,
                                 max_iters=args.max_iters, seed=args.seed)
        error = pose_error(estimate.pose, record.pose)
    except (NoModelError, ValueError) as e:
        logger.warning(f"Pair {record.pair_id}: no pose ({e})")
        error = FAILED_POSE_ERROR
    print(f"{error:.6f}", flush=True)
    return 0
