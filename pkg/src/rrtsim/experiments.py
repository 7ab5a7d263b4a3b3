"""Seeded, replicated experiments for the three growth phases and the coupon oracle.

Every replica owns a private :class:`RngStream` whose index is derived from
its configuration and replica number, so results do not depend on how
replicas are scheduled.  Aggregation sorts records by replica before
reducing.
"""

from __future__ import annotations

import csv
import io
import math
import multiprocessing
import os
import tempfile
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import cover as cov
from .metrics import depth_model_samples
from .space import MAX_DIM, RngStream
from .tree import NNT, RRT, STOP_COVERED, STOP_HALF_SPACE, Tree, grow, index_for, root_path_lengths

KINDS = ("hit_time", "cover_time", "post_cover", "nnt_stats", "coupon")
AGGREGATE_COLUMNS = ("kind", "d", "epsilon", "n_or_step", "trials", "mean", "ci95", "censored")
TRIAL_COLUMNS = ("kind", "d", "epsilon", "replica", "stream", "censored", "observable", "n", "value")


@dataclass
class ExperimentPlan:
    kind: str
    d: int = 2
    epsilons: tuple = (0.1,)
    trials: int = 30
    max_steps: int = 10**6
    seed: int = 0
    stop_threshold: float = 0.5
    out_path: str | None = None
    # post_cover / nnt_stats: tree sizes at which observables are recorded
    checkpoints: tuple = ()
    # coupon: number of coupon types
    n: int = 100

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not 1 <= self.d <= MAX_DIM:
            raise ValueError(f"d must be in [1, {MAX_DIM}], got {self.d}")
        self.epsilons = tuple(float(e) for e in self.epsilons)
        if self.kind in ("hit_time", "cover_time", "post_cover") and not self.epsilons:
            raise ValueError("epsilons must be non-empty")
        if any(not e > 0 for e in self.epsilons):
            raise ValueError("epsilons must be positive")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        self.checkpoints = tuple(sorted(int(c) for c in self.checkpoints))
        if any(c < 1 for c in self.checkpoints):
            raise ValueError("checkpoints must be >= 1")
        if self.kind == "cover_time":
            for e in self.epsilons:
                cov.check_grid(self.d, e)
        if self.kind in ("post_cover",) and self.d != 2:
            raise ValueError("post_cover is defined for d = 2")
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @property
    def sizes(self) -> tuple:
        return self.checkpoints or (self.max_steps,)


@dataclass
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    stderr_slope: float


@dataclass
class TrialRecord:
    kind: str
    d: int
    epsilon: float | None
    replica: int
    stream: int
    censored: bool = False
    values: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AggregateRow:
    kind: str
    d: int
    epsilon: float | None
    n_or_step: int | None
    trials: int
    mean: float
    ci95: float
    censored: int


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    rows: list
    records: list
    fit: FitResult | None = None

    def row(self, kind, epsilon=None, n=None) -> AggregateRow:
        for r in self.rows:
            if r.kind == kind and (epsilon is None or r.epsilon == epsilon) and (n is None or r.n_or_step == n):
                return r
        raise KeyError((kind, epsilon, n))

    @property
    def censored_fraction(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.censored for r in self.records) / len(self.records)


# -- seeding and scheduling ---------------------------------------------------

def stream_index(config: str, replica: int) -> int:
    """Stream id for replica ``replica`` of the configuration named ``config``."""
    return (zlib.crc32(config.encode()) << 32) ^ int(replica)


def _config(kind: str, d: int, eps) -> str:
    return f"{kind}|{d}|{eps!r}"


def map_replicas(fn, tasks, parallelism: int = 1) -> list:
    """``[fn(t) for t in tasks]``, optionally across worker processes; order preserved."""
    tasks = list(tasks)
    if parallelism <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    ctx = multiprocessing.get_context("fork")
    chunk = max(1, len(tasks) // (4 * parallelism))
    with ProcessPoolExecutor(max_workers=parallelism, mp_context=ctx) as ex:
        return list(ex.map(fn, tasks, chunksize=chunk))


# -- statistics ---------------------------------------------------------------

def ci95(values) -> float:
    """Half-width of a Student-t 95% confidence interval for the mean."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return math.nan
    return float(stats.t.ppf(0.975, v.size - 1) * v.std(ddof=1) / math.sqrt(v.size))


def fit_linear(xs, ys) -> FitResult:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size != y.size or x.size < 3:
        raise ValueError("a fit needs at least 3 (x, y) pairs")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        raise ValueError("x values are all equal")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    stderr = math.sqrt(ss_res / (x.size - 2) / sxx)
    return FitResult(slope, intercept, r2, stderr)


def fit_loglog(xs, ys) -> FitResult:
    """Least squares of ``ln y`` on ``ln x``."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size < 3 or y.size < 3:
        raise ValueError("fit_loglog needs at least 3 points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("fit_loglog needs positive values")
    return fit_linear(np.log(x), np.log(y))


def cap_height(delta: float, z: float) -> float:
    """Height of the circular cap ``sqrt(delta^2 + z^2) - z``."""
    if delta < 0 or not z > 0:
        raise ValueError("cap_height needs delta >= 0 and z > 0")
    return math.hypot(delta, z) - z


def aggregate(records, kind: str, observable: str, n=None) -> AggregateRow:
    """Mean and CI of one observable over uncensored records, in replica order."""
    recs = sorted(records, key=lambda r: r.replica)
    key = observable if n is None else (observable, n)
    vals = [r.values[key] for r in recs if not r.censored]
    first = recs[0]
    return AggregateRow(kind=kind, d=first.d, epsilon=first.epsilon, n_or_step=n,
                        trials=len(vals),
                        mean=float(np.mean(vals)) if vals else math.nan,
                        ci95=ci95(vals), censored=sum(r.censored for r in recs))


def _reference_row(kind, d, eps, value) -> AggregateRow:
    return AggregateRow(kind, d, eps, None, 0, float(value), 0.0, 0)


# -- phase 1: hitting time ------------------------------------------------------

def _hit_trial(task):
    d, eps, replica, seed, threshold, max_steps = task
    sid = stream_index(_config("hit_time", d, eps), replica)
    rng = RngStream(seed, sid)
    t = Tree.new(RRT, np.zeros(d), eps)
    steps, fired = grow(t, index_for(t), rng, max_steps, stop=STOP_HALF_SPACE,
                        axis=0, threshold=threshold)
    return TrialRecord("hit_time", d, eps, replica, sid, censored=not fired,
                       values={"hit_step": steps})


def run_hit_time(plan: ExperimentPlan, parallelism: int = 1) -> ExperimentResult:
    """RRT from the origin until a vertex has first coordinate >= ``stop_threshold``."""
    _expect(plan, "hit_time")
    tasks = [(plan.d, e, r, plan.seed, plan.stop_threshold, plan.max_steps)
             for e in plan.epsilons for r in range(plan.trials)]
    records = map_replicas(_hit_trial, tasks, parallelism)
    rows = []
    for e in plan.epsilons:
        rows.append(aggregate([r for r in records if r.epsilon == e], "hit_time", "hit_step"))
    fit = None
    good = [r for r in rows if r.trials > 0]
    if len(good) >= 3:
        fit = fit_loglog([1.0 / r.epsilon for r in good], [r.mean for r in good])
        rows.append(AggregateRow("hit_time.fit_slope", plan.d, None, None, len(good),
                                 fit.slope, 1.96 * fit.stderr_slope, 0))
    return ExperimentResult(plan, rows, records, fit)


# -- phase 2: covering time --------------------------------------------------------

def _cover_trial(task):
    d, eps, replica, seed, max_steps = task
    sid = stream_index(_config("cover_time", d, eps), replica)
    rng = RngStream(seed, sid)
    t = Tree.new(RRT, np.full(d, 0.5), eps)
    state = cov.cover_state_for(t, eps)
    _, fired = grow(t, index_for(t), rng, max_steps, stop=STOP_COVERED, cover=state)
    return TrialRecord("cover_time", d, eps, replica, sid, censored=not fired,
                       values={"tau_grid": state.cover_step if fired else max_steps})


def run_cover_time(plan: ExperimentPlan, parallelism: int = 1) -> ExperimentResult:
    """Grid-certified covering time per epsilon, with both harmonic reference curves."""
    _expect(plan, "cover_time")
    tasks = [(plan.d, e, r, plan.seed, plan.max_steps)
             for e in plan.epsilons for r in range(plan.trials)]
    records = map_replicas(_cover_trial, tasks, parallelism)
    rows = []
    for e in plan.epsilons:
        rows.append(aggregate([r for r in records if r.epsilon == e], "cover_time", "tau_grid"))
        rows.append(_reference_row("cover_time.lower_ref", plan.d, e, cov.lower_reference(plan.d, e)))
        rows.append(_reference_row("cover_time.upper_ref", plan.d, e, cov.upper_reference(plan.d, e)))
    fit = None
    means = [(r.epsilon, r.mean) for r in rows if r.kind == "cover_time" and r.trials > 0]
    if len(means) >= 3:
        fit = fit_linear([math.log(1 / e) for e, _ in means], [m * e**plan.d for e, m in means])
        rows.append(AggregateRow("cover_time.fit_slope", plan.d, None, None, len(means),
                                 fit.slope, 1.96 * fit.stderr_slope, 0))
        rows.append(AggregateRow("cover_time.fit_r2", plan.d, None, None, len(means),
                                 fit.r_squared, 0.0, 0))
    return ExperimentResult(plan, rows, records, fit)


# -- phase 3: post-cover and NNT statistics ----------------------------------------

TREE_OBSERVABLES = ("delta_scaled", "cum_ratio", "root_path", "depth", "depth_ratio",
                    "height", "height_ratio", "parent")


def tree_observables(t: Tree, sizes) -> dict:
    """Observables of node ``n`` / the tree ``T^n`` for each ``n`` in ``sizes``."""
    out = {}
    cum = np.cumsum(t.edges)
    paths = root_path_lengths(t)
    hmax = np.maximum.accumulate(t.depths)
    for n in sizes:
        ln = math.log(n) if n > 1 else math.nan
        dn = int(t.depth[n])
        out[("delta_scaled", n)] = float(t.edge[n] * math.sqrt(math.pi * n))
        out[("cum_ratio", n)] = float(cum[n] / math.sqrt(n))
        out[("root_path", n)] = float(paths[n])
        out[("depth", n)] = dn
        out[("depth_ratio", n)] = dn / ln
        out[("height", n)] = int(hmax[n])
        out[("height_ratio", n)] = int(hmax[n]) / ln
        out[("parent", n)] = int(t.parent[n])
    return out


def grow_tree_trial(kind: str, d: int, eps, sizes, rng: RngStream, root=None) -> tuple[Tree, int | None]:
    """Grow one tree to ``max(sizes)`` vertices past the root.

    NNT roots are uniform draws unless ``root`` is given; RRT roots default to
    the cube centre.  For RRTs the grid covering step is also returned.
    """
    n_max = max(sizes)
    if kind == NNT:
        r0 = rng.uniform(d) if root is None else np.asarray(root, dtype=np.float64)
        t = Tree.new(NNT, r0, capacity=n_max + 1)
        grow(t, index_for(t), rng, n_max)
        return t, None
    t = Tree.new(RRT, np.full(d, 0.5) if root is None else root, eps, capacity=n_max + 1)
    state = cov.cover_state_for(t, eps)
    grow(t, index_for(t), rng, n_max, cover=state)
    return t, state.cover_step


def _tree_trial(task):
    kind, label, d, eps, replica, seed, sizes = task
    sid = stream_index(_config(label, d, eps), replica)
    rng = RngStream(seed, sid)
    t, tau = grow_tree_trial(kind, d, eps, sizes, rng)
    values = tree_observables(t, sizes)
    censored = False
    if kind == RRT:
        values["tau_grid"] = tau
        # a post-cover statistic is only defined once the grid is covered
        censored = tau is None or tau > max(sizes)
    return TrialRecord(label, d, eps, replica, sid, censored=censored, values=values)


def _series_rows(records, label, sizes, observables=TREE_OBSERVABLES[:-1]) -> list:
    rows = []
    for obs in observables:
        for n in sizes:
            rows.append(aggregate(records, f"{label}.{obs}", obs, n))
    return rows


def run_post_cover(plan: ExperimentPlan, parallelism: int = 1) -> ExperimentResult:
    """RRTs grown well past covering; distance, path-length and depth statistics."""
    _expect(plan, "post_cover")
    sizes = plan.sizes
    rows, records = [], []
    for e in plan.epsilons:
        tasks = [(RRT, "post_cover", plan.d, e, r, plan.seed, sizes) for r in range(plan.trials)]
        recs = map_replicas(_tree_trial, tasks, parallelism)
        records += recs
        rows += _series_rows(recs, "post_cover", sizes)
        rows.append(aggregate(recs, "post_cover.tau_grid", "tau_grid"))
    return ExperimentResult(plan, rows, records)


def _oracle_trial(task):
    d, replica, seed, sizes, per = task
    sid = stream_index(_config("depth_model", d, None), replica)
    rng = RngStream(seed, sid)
    return TrialRecord("depth_model", d, None, replica, sid,
                       values={("depth", n): depth_model_samples(n, rng, per) for n in sizes})


def run_nnt_stats(plan: ExperimentPlan, parallelism: int = 1) -> ExperimentResult:
    """NNT depth/height statistics with RRTs (one per epsilon) and the depth-model oracle."""
    _expect(plan, "nnt_stats")
    sizes = plan.sizes
    tasks = [(NNT, "nnt_stats.nnt", plan.d, None, r, plan.seed, sizes) for r in range(plan.trials)]
    records = map_replicas(_tree_trial, tasks, parallelism)
    rows = _series_rows(records, "nnt_stats.nnt", sizes)
    for e in plan.epsilons:
        tasks = [(RRT, "nnt_stats.rrt", plan.d, e, r, plan.seed, sizes) for r in range(plan.trials)]
        recs = map_replicas(_tree_trial, tasks, parallelism)
        records += recs
        rows += _series_rows(recs, "nnt_stats.rrt", sizes)
    oracle = map_replicas(_oracle_trial, [(plan.d, r, plan.seed, sizes, 1) for r in range(plan.trials)],
                          parallelism)
    for r in oracle:
        r.values = {k: int(v[0]) for k, v in r.values.items()}
    records += oracle
    for n in sizes:
        rows.append(aggregate(oracle, "nnt_stats.depth_model", "depth", n))
    return ExperimentResult(plan, rows, records)


# -- coupon collector ------------------------------------------------------------------

def _coupon_trial(task):
    n, replica, seed = task
    sid = stream_index(_config("coupon", n, None), replica)
    return TrialRecord("coupon", n, None, replica, sid,
                       values={"draws": cov.coupon_simulate(n, RngStream(seed, sid))})


def run_coupon(plan: ExperimentPlan, parallelism: int = 1) -> ExperimentResult:
    _expect(plan, "coupon")
    records = map_replicas(_coupon_trial, [(plan.n, r, plan.seed) for r in range(plan.trials)],
                           parallelism)
    row = aggregate(records, "coupon", "draws")
    rows = [AggregateRow("coupon", plan.n, None, None, row.trials, row.mean, row.ci95, row.censored),
            AggregateRow("coupon.expected", plan.n, None, None, 0, cov.coupon_expected(plan.n), 0.0, 0)]
    return ExperimentResult(plan, rows, records)


RUNNERS = {
    "hit_time": run_hit_time,
    "cover_time": run_cover_time,
    "post_cover": run_post_cover,
    "nnt_stats": run_nnt_stats,
    "coupon": run_coupon,
}


def run(plan: ExperimentPlan, parallelism: int = 1) -> ExperimentResult:
    return RUNNERS[plan.kind](plan, parallelism)


def _expect(plan: ExperimentPlan, kind: str) -> None:
    if plan.kind != kind:
        raise ValueError(f"plan.kind is {plan.kind!r}, expected {kind!r}")


# -- output --------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def aggregate_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_COLUMNS)
    for r in rows:
        w.writerow([_fmt(v) for v in astuple_row(r)])
    return buf.getvalue()


def astuple_row(r: AggregateRow) -> tuple:
    return tuple(asdict(r)[c] for c in AGGREGATE_COLUMNS)


def trials_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    for r in sorted(records, key=lambda r: (r.kind, _fmt(r.epsilon), r.replica)):
        for key in sorted(r.values, key=str):
            obs, n = key if isinstance(key, tuple) else (key, None)
            w.writerow([r.kind, r.d, _fmt(r.epsilon), r.replica, r.stream, int(r.censored),
                        obs, _fmt(n), _fmt(r.values[key])])
    return buf.getvalue()


def write_atomic(path, text: str) -> None:
    """Write via a temporary file in the same directory and rename into place."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
