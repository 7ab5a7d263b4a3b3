"""Shared argument handling for the phase scripts."""

import argparse
import os
import sys
import time

from rrtsim import experiments as ex


def parser(description: str, trials: int) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--trials", type=int, default=trials)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallelism", type=int, default=os.cpu_count() or 1)
    return p


def execute(plan: ex.ExperimentPlan, out_dir: str, name: str, parallelism: int) -> ex.ExperimentResult:
    os.makedirs(out_dir, exist_ok=True)
    start = time.perf_counter()
    res = ex.run(plan, parallelism)
    path = os.path.join(out_dir, f"{name}.csv")
    ex.write_atomic(path, ex.aggregate_csv(res.rows))
    ex.write_atomic(os.path.join(out_dir, f"{name}.trials.csv"), ex.trials_csv(res.records))
    print(f"{name}: {len(res.records)} trials in {time.perf_counter() - start:.1f}s -> {path}",
          file=sys.stderr)
    if res.censored_fraction:
        print(f"  warning: {res.censored_fraction:.1%} of trials censored", file=sys.stderr)
    return res
