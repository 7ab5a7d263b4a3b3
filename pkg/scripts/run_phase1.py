#!/usr/bin/env python3
"""Hitting time of the half-space {x_1 >= 0.5} by an RRT rooted at the origin, across eps."""

from _common import execute, parser

from rrtsim.experiments import ExperimentPlan


def main():
    p = parser(__doc__, trials=200)
    p.add_argument("--epsilons", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.025, 0.0125])
    args = p.parse_args()
    plan = ExperimentPlan("hit_time", d=2, epsilons=tuple(args.epsilons), trials=args.trials,
                          seed=args.seed, max_steps=10**7)
    res = execute(plan, args.out, "phase1_hit_time", args.parallelism)
    for r in res.rows:
        if r.kind == "hit_time":
            print(f"eps={r.epsilon:<8g} mean hit time {r.mean:10.2f} +- {r.ci95:.2f}")
    if res.fit is not None:
        print(f"log-log slope {res.fit.slope:.3f} (r2 {res.fit.r_squared:.4f})")


if __name__ == "__main__":
    main()
