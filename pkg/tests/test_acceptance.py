"""Acceptance criteria, one test per criterion (some split into parts).

Statistical criteria use fixed seeds.  "At most" claims are CI-aware: they
fail only when the whole 95% interval lies above the bound.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from rrtsim import cli
from rrtsim import cover as cov
from rrtsim import experiments as ex
from rrtsim import tree as tr
from rrtsim.nn_index import NnIndex, nearest_bruteforce
from rrtsim.space import RngStream

HALF_ROOT_PI = math.sqrt(math.pi) / 2
SEED = 20240601
# RRT step size for the depth/height comparison; see README
DEPTH_EPS = 0.2


def not_above(row, bound):
    return row.mean - row.ci95 <= bound


# -- shared heavy runs -------------------------------------------------------------

@pytest.fixture(scope="module")
def cover_run():
    return ex.run_cover_time(ex.ExperimentPlan(
        "cover_time", d=2, epsilons=(0.2, 0.1, 0.05), trials=30, seed=SEED, max_steps=10**7))


@pytest.fixture(scope="module")
def post_cover_run():
    return ex.run_post_cover(ex.ExperimentPlan(
        "post_cover", d=2, epsilons=(0.05,), trials=100, seed=SEED,
        checkpoints=(10**4, 4 * 10**4, 10**5, 16 * 10**4)))


@pytest.fixture(scope="module")
def nnt_delta_run():
    return ex.run_nnt_stats(ex.ExperimentPlan(
        "nnt_stats", d=2, epsilons=(), trials=100, seed=SEED, checkpoints=(10**5,)))


@pytest.fixture(scope="module")
def depth_run():
    return ex.run_nnt_stats(ex.ExperimentPlan(
        "nnt_stats", d=2, epsilons=(DEPTH_EPS,), trials=200, seed=SEED, checkpoints=(10**5,)))


@pytest.fixture(scope="module")
def parent_depth_run():
    return ex.run_nnt_stats(ex.ExperimentPlan(
        "nnt_stats", d=2, epsilons=(), trials=10**4, seed=SEED, checkpoints=(8, 10**4)))


# -- criteria --------------------------------------------------------------------------

def test_c01_step_rule(verdict):
    eps, steps = 0.05, 10**5
    start = time.perf_counter()
    t = tr.Tree.new(tr.RRT, (0.5, 0.5), eps, trace=True, capacity=steps + 1)
    tr.grow(t, tr.index_for(t), RngStream(SEED, 1), steps)
    pos, tgt = t.positions[1:], t.targets[1: t.n]
    reached = t.reached[1: t.n]
    too_long = int(np.count_nonzero(t.edges[1:] > eps + 1e-12))
    mislabeled = int(np.count_nonzero(reached != np.all(pos == tgt, axis=1)))
    # independent brute-force audit of a sample of steps
    rng = np.random.default_rng(0)
    audit_bad = 0
    for i in rng.choice(np.arange(1, t.n), size=2000, replace=False):
        dist = np.sqrt(((t.pos[:i] - t.targets[i]) ** 2).sum(axis=1))
        within = dist.min() <= eps
        adopted = np.array_equal(t.pos[i], t.targets[i])
        if within != adopted or t.parent[i] != int(np.argmin(dist)):
            audit_bad += 1
    elapsed = time.perf_counter() - start
    ok = too_long == mislabeled == audit_bad == 0 and elapsed < 10
    verdict("C1 step rule (1e5 RRT steps, d=2, eps=0.05)", ok,
            f"edges>eps={too_long}, branch mislabels={mislabeled}, audit mismatches={audit_bad}/2000, "
            f"runtime={elapsed:.2f}s")


def _grid_lemma_panel(root_of):
    eps, steps = 0.1, 10**5
    total, edge_ties = 0, 0
    for d in (1, 2, 3):
        g = cov.cells_per_axis(d, eps)
        for seed in range(10):
            t = tr.Tree.new(tr.RRT, root_of(d, seed), eps, trace=True, capacity=steps + 1)
            tr.grow(t, tr.index_for(t), RngStream(SEED + seed, d), steps)
            bad = cov.lemma1_violations(t, eps)
            if bad:
                scaled = t.positions * g
                edge_ties += int(np.any(np.abs(scaled - np.round(scaled)) < 1e-9, axis=1).sum() > 0)
            total += bad
    return total, edge_ties


def test_c02_grid_lemma(verdict):
    total, _ = _grid_lemma_panel(lambda d, seed: RngStream(SEED + seed, 100 + d).points(1, d)[0])
    # lattice-aligned start: exact real-arithmetic ties on cell edges, decided by rounding
    lattice, ties = _grid_lemma_panel(lambda d, seed: np.zeros(d))
    verdict("C2 grid lemma (1e5 traced steps x 10 seeds x d=1,2,3, uniform root)", total == 0,
            f"violations={total}; info origin root: violations={lattice} "
            f"(runs with vertices on cell edges: {ties})")


def _sandwich_detail(res):
    parts = []
    for e in (0.2, 0.1, 0.05):
        r = res.row("cover_time", epsilon=e)
        lo = res.row("cover_time.lower_ref", epsilon=e).mean
        hi = res.row("cover_time.upper_ref", epsilon=e).mean
        k = cov.cells_per_axis(2, e) ** 2
        parts.append(f"eps={e}: mean={r.mean:.1f}+-{r.ci95:.1f} lower={lo:.1f} upper={hi:.1f} "
                     f"(grid cells={k}, exact K*H_(K-1)={k * cov.harmonic(k - 1):.1f})")
    return "; ".join(parts)


def test_c03_cover_sandwich_lower(cover_run, verdict):
    ok = all(cover_run.row("cover_time", epsilon=e).mean
             >= cover_run.row("cover_time.lower_ref", epsilon=e).mean
             - cover_run.row("cover_time", epsilon=e).ci95 for e in (0.2, 0.1, 0.05))
    verdict("C3a covering time >= lower reference - CI", ok, _sandwich_detail(cover_run))


def test_c03_cover_sandwich_upper(cover_run, verdict):
    ok = all(cover_run.row("cover_time", epsilon=e).mean
             <= cover_run.row("cover_time.upper_ref", epsilon=e).mean
             + cover_run.row("cover_time", epsilon=e).ci95 for e in (0.2, 0.1, 0.05))
    verdict("C3b covering time <= upper reference + CI", ok, _sandwich_detail(cover_run))


def test_c03_cover_fit(cover_run, verdict):
    f = cover_run.fit
    censored = cover_run.censored_fraction
    verdict("C3c fit of mean*eps^2 vs ln(1/eps)", f.slope > 0 and f.r_squared >= 0.9 and censored == 0,
            f"slope={f.slope:.3f}, r2={f.r_squared:.4f}, censored={censored:.1%}")


def test_c04_coupon(verdict):
    res = ex.run_coupon(ex.ExperimentPlan("coupon", n=100, trials=10**4, seed=SEED, epsilons=()))
    mean, expected = res.rows[0].mean, cov.coupon_expected(100)
    rel = abs(mean / expected - 1)
    verdict("C4 coupon collector n=100", rel < 0.05,
            f"mean={mean:.2f}, n*H_n={expected:.2f}, rel.err={rel:.2%}")


def test_c05_hit_time_exponent(verdict):
    res = ex.run_hit_time(ex.ExperimentPlan(
        "hit_time", d=2, epsilons=(0.2, 0.1, 0.05, 0.025), trials=200, seed=SEED, max_steps=10**7))
    f = res.fit
    means = ", ".join(f"{r.epsilon}:{r.mean:.2f}" for r in res.rows if r.kind == "hit_time")
    ok = 1.0 <= f.slope <= 1.6 and res.censored_fraction <= 0.01
    verdict("C5 hit-time exponent in [1.0, 1.6]", ok,
            f"slope={f.slope:.3f}+-{1.96 * f.stderr_slope:.3f} (r2={f.r_squared:.4f}); means {means}")


def test_c06_connecting_lemma(verdict):
    dist_bad = depth_bad = 0
    for s in range(20):
        base = tr.Tree.new(tr.RRT, (0.5, 0.5), 0.1)
        state = cov.cover_state_for(base, 0.1)
        tr.grow(base, tr.index_for(base), RngStream(SEED + s, 0), 10**6,
                stop=tr.STOP_COVERED, cover=state)
        conn, bare = tr.coupled_pair(base, 10**4, SEED + s, 1)
        a, b = tr.coupling_violations(conn, bare)
        dist_bad += a
        depth_bad += b
    verdict("C6 connecting lemma, pathwise (1e4 nodes x 20 seeds)", dist_bad == depth_bad == 0,
            f"delta' > delta: {dist_bad}, D' > D + H + 1: {depth_bad}")


def test_c07_scaled_distance(nnt_delta_run, post_cover_run, verdict):
    bound = HALF_ROOT_PI + 0.05
    a = nnt_delta_run.row("nnt_stats.nnt.delta_scaled", n=10**5)
    b = post_cover_run.row("post_cover.delta_scaled", epsilon=0.05, n=10**5)
    cens = post_cover_run.censored_fraction
    verdict("C7 mean delta_n*sqrt(pi n) at n=1e5 <= sqrt(pi)/2 + 0.05",
            not_above(a, bound) and not_above(b, bound) and cens == 0,
            f"NNT {a.mean:.4f}+-{a.ci95:.4f}, RRT(eps=0.05) {b.mean:.4f}+-{b.ci95:.4f}, "
            f"bound {bound:.4f}")


def test_c08_total_length(post_cover_run, verdict):
    m = [post_cover_run.row("post_cover.cum_ratio", epsilon=0.05, n=n).mean
         for n in (10**4, 4 * 10**4, 16 * 10**4)]
    r1, r2 = m[1] / m[0], m[2] / m[1]
    verdict("C8 Delta_n/sqrt(n) across quadruplings", 0.8 <= r2 <= 1.2,
            f"Delta/sqrt(n) = {m[0]:.4f}, {m[1]:.4f}, {m[2]:.4f}; ratios {r1:.4f} (first), {r2:.4f}")


def test_c09_root_path(post_cover_run, verdict):
    a = post_cover_run.row("post_cover.root_path", epsilon=0.05, n=10**4)
    b = post_cover_run.row("post_cover.root_path", epsilon=0.05, n=10**5)
    pooled = math.hypot(a.ci95, b.ci95)
    diff = b.mean - a.mean
    verdict("C9 mean L_n, n=1e4 vs 1e5", abs(diff) <= 2 * pooled,
            f"L(1e4)={a.mean:.4f}+-{a.ci95:.4f}, L(1e5)={b.mean:.4f}+-{b.ci95:.4f}, "
            f"diff={diff:.4f}, 2*pooled CI={2 * pooled:.4f}")


def test_c10_parent_law(parent_depth_run, verdict):
    nnt = [r for r in parent_depth_run.records if r.kind == "nnt_stats.nnt"]
    counts = np.bincount([r.values[("parent", 8)] for r in nnt], minlength=8)
    p = stats.chisquare(counts).pvalue
    verdict("C10a NNT parent index at n=8 uniform on 0..7", p > 0.001,
            f"chi-square p={p:.4f}, counts={counts.tolist()}")


def test_c10_depth_law(parent_depth_run, verdict):
    nnt = [r.values[("depth", 10**4)] for r in parent_depth_run.records if r.kind == "nnt_stats.nnt"]
    model = [r.values[("depth", 10**4)] for r in parent_depth_run.records if r.kind == "depth_model"]
    ks = stats.ks_2samp(nnt, model).statistic
    m, n = len(nnt), len(model)
    crit = math.sqrt(-math.log(0.001 / 2) / 2) * math.sqrt((m + n) / (m * n))
    verdict("C10b NNT depth at n=1e4 vs iterated-floor model", ks < crit,
            f"KS={ks:.4f}, critical(0.001)={crit:.4f}, means {np.mean(nnt):.3f} vs {np.mean(model):.3f}")


def test_c11_depth_height(depth_run, post_cover_run, verdict):
    n = 10**5
    rows = {
        "NNT D/ln n": (depth_run.row("nnt_stats.nnt.depth_ratio", n=n), 1.1),
        "NNT H/ln n": (depth_run.row("nnt_stats.nnt.height_ratio", n=n), math.e + 0.2),
        f"RRT(eps={DEPTH_EPS}) D/ln n": (depth_run.row("nnt_stats.rrt.depth_ratio", n=n), 1.1),
        f"RRT(eps={DEPTH_EPS}) H/ln n": (depth_run.row("nnt_stats.rrt.height_ratio", n=n), math.e + 0.2),
    }
    ok = all(not_above(r, b) for r, b in rows.values())
    detail = ", ".join(f"{k}={r.mean:.3f}+-{r.ci95:.3f} (<= {b:.3f})" for k, (r, b) in rows.items())
    small = post_cover_run
    detail += (f"; info RRT(eps=0.05): D/ln n={small.row('post_cover.depth_ratio', n=n).mean:.3f}, "
               f"H/ln n={small.row('post_cover.height_ratio', n=n).mean:.3f}")
    verdict("C11 depth and height at n=1e5", ok, detail)


def test_c12_nn_oracle(verdict):
    mismatches = 0
    for d in (1, 2, 3):
        for panel in range(3):
            rng = RngStream(SEED + panel, d)
            pts = rng.points(1000, d)
            if panel == 2:
                pts = np.round(pts * 8) / 8  # exact ties
            idx = NnIndex(d)
            for p in pts:
                idx.insert(p)
            qs = rng.points(1000, d)
            if panel == 2:
                qs = np.round(qs * 16) / 16
            mismatches += sum(idx.nearest(q) != nearest_bruteforce(pts, q) for q in qs)
    verdict("C12 grid index == brute force (d=1,2,3; 1e3 points/queries per panel)",
            mismatches == 0, f"mismatches={mismatches}")


def test_c13_determinism(tmp_path, verdict):
    outs = {}
    for par in (1, 4):
        for name, argv in {
            "hit": "hit-time --epsilons 0.2,0.1,0.05 --trials 40",
            "cover": "cover-time --epsilons 0.3,0.2,0.15 --trials 20",
            "nnt": "nnt-stats --epsilons 0.3 --trials 16 --checkpoints 100,2000",
        }.items():
            out = tmp_path / f"{name}-{par}.csv"
            code = cli.main(f"{argv} --seed {SEED} --parallelism {par} --out {out}".split())
            assert code == 0
            outs[(name, par)] = out.read_bytes()
    same = all(outs[(k, 1)] == outs[(k, 4)] for k in ("hit", "cover", "nnt"))
    verdict("C13 byte-identical aggregates at parallelism 1 and 4", same,
            ", ".join(f"{k}: {len(outs[(k, 1)])} bytes" for k in ("hit", "cover", "nnt")))
