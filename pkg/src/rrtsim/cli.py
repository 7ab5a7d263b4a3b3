"""Command line front end: ``rrtsim <subcommand> [flags]``.

Every flag may also come from a JSON config file (``--config``) whose keys
are the flag names with dashes replaced by underscores; flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from . import cover as cov
from . import experiments as ex
from . import tree as tr
from .metrics import geometric_schedule, series_csv, series_from_tree
from .space import MAX_DIM, RngStream

SUBCOMMANDS = ("grow", "hit-time", "cover-time", "post-cover", "nnt-stats", "coupon", "check")
PLAN_KIND = {"hit-time": "hit_time", "cover-time": "cover_time", "post-cover": "post_cover",
             "nnt-stats": "nnt_stats", "coupon": "coupon"}
CENSOR_LIMIT = 0.01

DEFAULTS = {
    "d": 2, "epsilons": (0.1,), "epsilon": 0.1, "trials": 30, "seed": 0, "stream": 0,
    "max_steps": 10**6, "stop_threshold": 0.5, "out": None, "raw": None, "checkpoints": (),
    "n": 100, "format": "csv", "parallelism": 1, "kind": "rrt", "steps": 1000,
    "dump": None, "series": None, "root": None, "coupling_steps": 10**4,
}
# which keys each subcommand accepts (beyond config/format/parallelism)
_ACCEPTS = {
    "grow": {"kind", "d", "epsilon", "steps", "seed", "stream", "dump", "series", "root"},
    "check": {"d", "epsilon", "steps", "seed", "stream", "coupling_steps"},
    "coupon": {"n", "trials", "seed", "out", "raw"},
}
_PLAN_KEYS = {"d", "epsilons", "trials", "seed", "max_steps", "stop_threshold", "out", "raw",
              "checkpoints"}
for _k in ("hit-time", "cover-time", "post-cover", "nnt-stats"):
    _ACCEPTS[_k] = _PLAN_KEYS
_COMMON = {"format", "parallelism"}


class UsageError(Exception):
    pass


@dataclass
class CliConfig:
    subcommand: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    def plan(self) -> ex.ExperimentPlan:
        v = self.values
        kind = PLAN_KIND[self.subcommand]
        kw = dict(kind=kind, seed=v["seed"], out_path=v["out"], trials=v["trials"])
        if kind == "coupon":
            kw.update(n=v["n"], epsilons=())
        else:
            kw.update(d=v["d"], epsilons=v["epsilons"], max_steps=v["max_steps"],
                      stop_threshold=v["stop_threshold"], checkpoints=v["checkpoints"])
        return ex.ExperimentPlan(**kw)


def _floats(s: str) -> tuple:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _ints(s: str) -> tuple:
    return tuple(int(float(x)) for x in s.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rrtsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON file of flag values")
        s.add_argument("--format", choices=("csv", "json"), default=None)
        s.add_argument("--parallelism", type=int, default=None)
        keys = _ACCEPTS[name]
        if "d" in keys:
            s.add_argument("--d", type=int, default=None)
        if "epsilons" in keys:
            s.add_argument("--epsilons", type=_floats, default=None, help="comma separated")
        if "epsilon" in keys:
            s.add_argument("--epsilon", type=float, default=None)
        if "trials" in keys:
            s.add_argument("--trials", type=int, default=None)
        if "seed" in keys:
            s.add_argument("--seed", type=int, default=None)
        if "stream" in keys:
            s.add_argument("--stream", type=int, default=None)
        if "max_steps" in keys:
            s.add_argument("--max-steps", type=lambda x: int(float(x)), default=None)
        if "stop_threshold" in keys:
            s.add_argument("--stop-threshold", type=float, default=None)
        if "checkpoints" in keys:
            s.add_argument("--checkpoints", type=_ints, default=None, help="comma separated")
        if "out" in keys:
            s.add_argument("--out", default=None, help="aggregate output path (default stdout)")
        if "raw" in keys:
            s.add_argument("--raw", default=None, help="per-trial CSV path")
        if "n" in keys:
            s.add_argument("--n", type=int, default=None)
        if "kind" in keys:
            s.add_argument("--kind", choices=("rrt", "nnt"), default=None)
        if "steps" in keys:
            s.add_argument("--steps", type=lambda x: int(float(x)), default=None)
        if "dump" in keys:
            s.add_argument("--dump", default=None, help="tree dump path")
        if "series" in keys:
            s.add_argument("--series", default=None, help="series CSV path")
        if "root" in keys:
            s.add_argument("--root", type=_floats, default=None, help="comma separated root point")
        if "coupling_steps" in keys:
            s.add_argument("--coupling-steps", type=lambda x: int(float(x)), default=None)
    return p


def _load_config(path: str, allowed: set) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {path}: {e}")
    if not isinstance(raw, dict):
        raise UsageError("config file must hold a JSON object")
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    out = dict(raw)
    for k in ("epsilons", "root"):
        if k in out and isinstance(out[k], (int, float)):
            out[k] = (out[k],)
    for k in ("epsilons", "root", "checkpoints"):
        if k in out and out[k] is not None:
            out[k] = tuple(out[k])
    return out


def _validate(sub: str, v: dict) -> None:
    def bad(field_name, why):
        raise UsageError(f"invalid {field_name}: {why}")

    if "d" in v and not 1 <= v["d"] <= MAX_DIM:
        bad("d", f"must be in [1, {MAX_DIM}], got {v['d']}")
    if "epsilons" in v:
        if not v["epsilons"]:
            bad("epsilons", "must be non-empty")
        if any(not e > 0 for e in v["epsilons"]):
            bad("epsilons", "must be positive")
    if "epsilon" in v and not v["epsilon"] > 0:
        bad("epsilon", "must be positive")
    for k in ("trials", "max_steps", "steps", "n", "coupling_steps"):
        if k in v and v[k] < 1:
            bad(k, "must be >= 1")
    if v["parallelism"] < 1:
        bad("parallelism", "must be >= 1")
    if "seed" in v and not 0 <= v["seed"] < 2**64:
        bad("seed", "must be a 64-bit unsigned integer")
    if sub == "cover-time" or sub == "check":
        eps_list = v.get("epsilons") or (v.get("epsilon"),)
        for e in eps_list:
            try:
                cov.check_grid(v["d"], e)
            except cov.GridTooLarge as err:
                bad("epsilons" if sub == "cover-time" else "epsilon", f"memory guard: {err}")
    if sub == "post-cover" and v["d"] != 2:
        bad("d", "post-cover runs in d = 2 only")
    if v.get("root") is not None:
        r = v["root"]
        if len(r) != v["d"] or any(not 0 <= c <= 1 for c in r):
            bad("root", "must be a point of the unit cube with d coordinates")


def parse_args(argv) -> CliConfig:
    """Parse and validate; raises SystemExit(2) with a message on usage errors."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    sub = ns.subcommand
    allowed = _ACCEPTS[sub] | _COMMON
    try:
        values = {k: DEFAULTS[k] for k in allowed}
        if ns.config:
            values.update(_load_config(ns.config, allowed))
        for k in allowed:
            flag = getattr(ns, k, None)
            if flag is not None:
                values[k] = flag
        _validate(sub, values)
    except UsageError as e:
        parser.error(str(e))
    return CliConfig(sub, values)


def _emit(text: str, path) -> None:
    if path:
        ex.write_atomic(path, text)
    else:
        sys.stdout.write(text)


def _result_json(res: ex.ExperimentResult) -> str:
    doc = {"plan": {k: v for k, v in vars(res.plan).items()},
           "generator_name": RngStream.generator_name,
           "rows": [dict(zip(ex.AGGREGATE_COLUMNS, ex.astuple_row(r))) for r in res.rows]}
    return json.dumps(doc, indent=1, sort_keys=True, default=list) + "\n"


def _run_plan(cfg: CliConfig) -> int:
    plan = cfg.plan()
    res = ex.run(plan, cfg.parallelism)
    text = ex.aggregate_csv(res.rows) if cfg.format == "csv" else _result_json(res)
    _emit(text, cfg.out)
    if cfg.raw:
        ex.write_atomic(cfg.raw, ex.trials_csv(res.records))
    frac = res.censored_fraction
    head = res.rows[0]
    print(f"{plan.kind}: {len(res.records)} trials, first row mean={head.mean:.6g} "
          f"ci95={head.ci95:.3g}, censored={frac:.2%}", file=sys.stderr)
    return 1 if frac > CENSOR_LIMIT else 0


def _default_root(d):
    return np.full(d, 0.5)


def _run_grow(cfg: CliConfig) -> int:
    root = np.asarray(cfg.root) if cfg.root is not None else _default_root(cfg.d)
    kind = tr.RRT if cfg.kind == "rrt" else tr.NNT
    t = tr.Tree.new(kind, root, cfg.epsilon if kind == tr.RRT else None, capacity=cfg.steps + 1)
    t.meta = {"seed": cfg.seed, "stream": cfg.stream}
    tr.grow(t, tr.index_for(t), RngStream(cfg.seed, cfg.stream), cfg.steps)
    if cfg.dump:
        ex.write_atomic(cfg.dump, tr.dumps(t))
    if cfg.series:
        s = series_from_tree(t)
        ex.write_atomic(cfg.series, series_csv(s, geometric_schedule(int(s["n"].size))))
    print(f"grow: {kind} d={cfg.d} nodes={t.n} height={t.height}", file=sys.stderr)
    return 0


def _run_check(cfg: CliConfig) -> int:
    """Traced RRT: step rule, grid-lemma and coupling checks."""
    d, eps = cfg.d, cfg.epsilon
    t = tr.Tree.new(tr.RRT, np.zeros(d), eps, trace=True, capacity=cfg.steps + 1)
    state = cov.cover_state_for(t, eps)
    tr.grow(t, tr.index_for(t), RngStream(cfg.seed, cfg.stream), cfg.steps, cover=state)
    pos, tgt = t.positions[1:], t.targets[1: t.n]
    reached = t.reached[1: t.n]
    step_bad = int(np.count_nonzero(t.edges[1:] > eps + 1e-12))
    step_bad += int(np.count_nonzero(reached != np.all(pos == tgt, axis=1)))
    step_bad += int(np.count_nonzero(~reached & (t.edges[1:] < eps - 1e-12)))
    lemma_bad = cov.lemma1_violations(t, eps)
    # couple onto the tree at its covering step (or the whole run if not covered)
    cut = state.cover_step if state.cover_step is not None else t.n - 1
    base = tr.truncate(t, cut + 1)
    conn, bare = tr.coupled_pair(base, cfg.coupling_steps, cfg.seed, cfg.stream + 1)
    dist_bad, depth_bad = tr.coupling_violations(conn, bare)
    ok = step_bad == lemma_bad == dist_bad == depth_bad == 0
    print(f"check: steps={t.n - 1} cover_step={state.cover_step} step_rule_violations={step_bad} "
          f"grid_lemma_violations={lemma_bad} coupling_distance_violations={dist_bad} "
          f"coupling_depth_violations={depth_bad} -> {'ok' if ok else 'FAILED'}")
    return 0 if ok else 1


def run(cfg: CliConfig) -> int:
    try:
        if cfg.subcommand == "grow":
            return _run_grow(cfg)
        if cfg.subcommand == "check":
            return _run_check(cfg)
        return _run_plan(cfg)
    except OSError as e:
        print(f"rrtsim: I/O error on {e.filename or '?'}: {e.strerror or e}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    cfg = parse_args(sys.argv[1:] if argv is None else argv)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
