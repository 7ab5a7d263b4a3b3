#!/usr/bin/env python3
"""Edge length, path length, depth and height statistics for post-cover RRTs and NNTs."""

import math

from _common import execute, parser

from rrtsim.experiments import ExperimentPlan

CHECKPOINTS = (10**3, 4 * 10**3, 16 * 10**3, 64 * 10**3, 256 * 10**3)


def main():
    p = parser(__doc__, trials=100)
    p.add_argument("--epsilons", type=float, nargs="+", default=[0.2, 0.1, 0.05])
    args = p.parse_args()
    eps = tuple(args.epsilons)
    post = execute(ExperimentPlan("post_cover", d=2, epsilons=eps, trials=args.trials,
                                  seed=args.seed, checkpoints=CHECKPOINTS),
                   args.out, "phase3_post_cover", args.parallelism)
    nnt = execute(ExperimentPlan("nnt_stats", d=2, epsilons=eps, trials=args.trials,
                                 seed=args.seed, checkpoints=CHECKPOINTS),
                  args.out, "phase3_nnt_stats", args.parallelism)
    n = CHECKPOINTS[-1]
    print(f"n = {n}; sqrt(pi)/2 = {math.sqrt(math.pi) / 2:.4f}")
    for e in eps:
        row = lambda obs: post.row(f"post_cover.{obs}", epsilon=e, n=n).mean  # noqa: E731
        print(f"RRT eps={e:<5g} delta*sqrt(pi n) {row('delta_scaled'):.4f}  Delta/sqrt(n) {row('cum_ratio'):.4f}"
              f"  L {row('root_path'):.4f}  D/ln n {row('depth_ratio'):.3f}  H/ln n {row('height_ratio'):.3f}")
    row = lambda obs: nnt.row(f"nnt_stats.nnt.{obs}", n=n).mean  # noqa: E731
    print(f"NNT          delta*sqrt(pi n) {row('delta_scaled'):.4f}  Delta/sqrt(n) {row('cum_ratio'):.4f}"
          f"  L {row('root_path'):.4f}  D/ln n {row('depth_ratio'):.3f}  H/ln n {row('height_ratio'):.3f}")


if __name__ == "__main__":
    main()
