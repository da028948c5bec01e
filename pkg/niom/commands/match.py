# niom/commands/match.py

"""`niom match`: match two keypoint files, write index_a,index_b,confidence CSV."""

from ..config import get_projection_weights
from ..matching import MatcherConfig, MatcherKind, ScoreKind, match_sets
from ..weighting import WeightedDescriptorSet
from . import command_handler


def register(subparsers) -> None:
    p = subparsers.add_parser("match", help="match two NIOK keypoint files")
    p.add_argument("--a", required=True, help="NIOK file of image A")
    p.add_argument("--b", required=True, help="NIOK file of image B")
    p.add_argument("--out", required=True, help="output matches CSV")
    p.add_argument("--matcher", choices=[k.value for k in MatcherKind], default=MatcherKind.MNN.value)
    p.add_argument("--ratio", type=float, default=0.95)
    p.add_argument("--min-sim", type=float, default=0.5)
    p.add_argument("--scores", choices=[s.value for s in ScoreKind], default=ScoreKind.SIMILARITY.value,
                   help="sinkhorn score source")
    p.add_argument("--weights", help="NIOW projection weights (default: NIOM_PROJECTION_WEIGHTS or seeded)")
    p.add_argument("--dustbin", type=float, default=0.0)
    p.add_argument("--temperature", type=float, default=0.1)
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--min-confidence", type=float, default=0.2)
    p.set_defaults(handler=handle)


@command_handler("Match")
def handle(args) -> int:
    set_a = WeightedDescriptorSet.load(args.a)
    set_b = WeightedDescriptorSet.load(args.b)
    if set_a.dim != set_b.dim:
        raise ValueError(f"Descriptor dimensions differ: {set_a.dim} vs {set_b.dim}")
    config = MatcherConfig(kind=MatcherKind(args.matcher), ratio=args.ratio, min_similarity=args.min_sim,
                           dustbin_score=args.dustbin, temperature=args.temperature,
                           iterations=args.iterations, min_confidence=args.min_confidence,
                           scores=ScoreKind(args.scores))
    proj = None
    if config.kind is MatcherKind.SINKHORN and config.scores is ScoreKind.CROSS_ATTENTION:
        proj = get_projection_weights(set_a.dim, args.weights)

    matches = match_sets(set_a, set_b, config, proj)
    matches.save_csv(args.out)
    print(f"[Match] {len(matches)} matches ({len(set_a)} x {len(set_b)} keypoints) -> {args.out}", flush=True)
    return 0
