#!/usr/bin/env python3
"""Grid covering time of the unit cube against the two harmonic reference curves, d = 1, 2, 3."""

from _common import execute, parser

from rrtsim.cover import cells_per_axis, harmonic
from rrtsim.experiments import ExperimentPlan

PANEL = {1: (0.1, 0.05, 0.02, 0.01), 2: (0.2, 0.1, 0.05), 3: (0.4, 0.3, 0.2)}


def main():
    p = parser(__doc__, trials=30)
    p.add_argument("--dims", type=int, nargs="+", default=sorted(PANEL))
    args = p.parse_args()
    for d in args.dims:
        eps = PANEL.get(d, (0.5,))
        plan = ExperimentPlan("cover_time", d=d, epsilons=eps, trials=args.trials,
                              seed=args.seed, max_steps=10**8)
        res = execute(plan, args.out, f"phase2_cover_time_d{d}", args.parallelism)
        for e in eps:
            k = cells_per_axis(d, e) ** d
            print(f"d={d} eps={e:<6g} mean {res.row('cover_time', epsilon=e).mean:11.1f}"
                  f"  lower {res.row('cover_time.lower_ref', epsilon=e).mean:10.1f}"
                  f"  upper {res.row('cover_time.upper_ref', epsilon=e).mean:10.1f}"
                  f"  grid coupon {k * harmonic(k - 1):10.1f}")
        if res.fit is not None:
            print(f"d={d} fit of mean*eps^d vs ln(1/eps): slope {res.fit.slope:.3f} r2 {res.fit.r_squared:.4f}")


if __name__ == "__main__":
    main()
