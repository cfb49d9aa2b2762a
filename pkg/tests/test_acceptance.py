"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line.

Reference values are frozen from an independent 50-digit mpmath computation.
"""

import math
import time

import numpy as np
import pytest

from qlcrisk.acceptance import (
    check_B_positively_homogeneous,
    check_B_star_shaped,
    family_from_measure,
    measure_from_family,
)
from qlcrisk.allocation import allocate_by_acceptance, car_proportional, car_subdifferential
from qlcrisk.correspondence import SamplerConfig, bridge_equivalences, check_property, paper_counterexamples
from qlcrisk.duality import (
    DualMeasure,
    RFunctional,
    arar_mixing_measure,
    arar_mixture_eval,
    dual_eval,
    dual_eval_building_block,
    law_invariant_bruteforce,
    law_invariant_dual_eval,
    recover_r,
    recover_r_grid_oracle,
)
from qlcrisk.measures import h0_premium
from qlcrisk.portfolio import (
    PortfolioProblem,
    check_diversification_inequalities,
    check_frontier,
    efficient_frontier,
    sample_wealth_pairs,
    solve_portfolio,
    solve_portfolio_grid_oracle,
    wealth_continuous_limit,
    wealth_rebalanced,
)
from qlcrisk.prob_core import (
    Position,
    PositivePosition,
    ProbSpace,
    Scenario,
    ScenarioSet,
    comonotone_integral,
)
from qlcrisk.specs import MeasureSpec, builtin_specs, default_space

SPACE, QS = default_space()
GATE = []

# mpmath, 50 digits
CE1_MID = 7.59088107794212451  # exp(0.5 log((1+e^2)/2) + 0.5 log((e^3+e^2)/2))
CE2_SCALED = 3.18455446926336164  # exp((sqrt(11) - 1) / 2)

ALL_FAMILIES = [
    RFunctional.coherent(),
    RFunctional.convex_penalty([0.0, 0.3, 0.6]),
    RFunctional.supq_penalty([0.0, 0.3, 0.6], 0.5),
    RFunctional.floor(0.5),
    RFunctional.log_floor(0.5),
    RFunctional.ph_kink(1.0, 0.5),
    RFunctional.user_table([[-4, -4], [0, 0], [1, 2], [4, 8]]),
]


def report(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {detail}"
    GATE.append(line)
    print(line)
    assert ok, line


def _best_time(fn, reps=20):
    fn()
    best = math.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def test_criterion_01_geometric_mean_not_quasi_convex():
    two = ProbSpace.uniform(2)
    x = np.array([1.0, math.exp(3.0)])
    y = np.full(2, math.exp(2.0))
    trho = MeasureSpec("h0").functional(two)
    mid = 0.5 * (x + y)
    val = trho(mid)
    elapsed = _best_time(lambda: trho(mid))
    ok = (val > math.exp(2.0) and abs(val - CE1_MID) <= 1e-9 and max(trho(x), trho(y)) == pytest.approx(math.exp(2))
          and elapsed < 1e-3 and paper_counterexamples()["logcoherent_not_quasi_convex"].holds)
    report(1, ok, f"rho((X+Y)/2) = {val:.12f} > e^2, |err| = {abs(val - CE1_MID):.2e}, {elapsed * 1e6:.0f} us")


def test_criterion_02_mean_value_not_ph():
    two = ProbSpace.uniform(2)
    spec = MeasureSpec("mean_value", {"ell": {"tag": "linear_quadratic"}, "scenarios": "P"})
    trho = spec.functional(two)
    x = np.array([1.0, math.exp(3.0)])
    v = trho(x)
    vs = trho(x / math.e)
    ok = abs(v - math.exp(2.0)) <= 1e-9 and abs(vs - CE2_SCALED) <= 1e-9 and vs > math.e
    report(2, ok, f"rho(X) = {v:.12f} (e^2), rho(X/e) = {vs:.12f} > e")


def test_criterion_03_round_trip():
    rng = np.random.default_rng(2024)
    X = np.exp(rng.uniform(-3.0, 3.0, (500, SPACE.n)))
    specs = builtin_specs()
    t0 = time.perf_counter()
    worst, who = 0.0, ""
    for s in specs:
        mon, ret = s.pair(SPACE, QS)
        d = float(np.max(np.abs(ret.values(X) - np.exp(mon.values(np.log(X))))))
        if d > worst:
            worst, who = d, s.label
    elapsed = time.perf_counter() - t0
    report(3, worst <= 1e-12 and elapsed < 1.0,
           f"{len(specs)} pairs x 500 positions, max |diff| = {worst:.2e} ({who}), {elapsed:.3f} s")


def test_criterion_04_bridge_suite():
    specs = builtin_specs()
    cfg = SamplerConfig(n_samples=500, seed=4)
    bad = []
    for s in specs:
        mon, ret = s.pair(SPACE, QS)
        rep = bridge_equivalences(mon, ret, cfg)
        bad += [f"{s.label}:{k}" for k, r in rep.results.items() if not r.holds]
    report(4, len(specs) >= 20 and not bad,
           f"{len(specs)} specs, N=500, disagreements: {bad if bad else 'none'}")


def test_criterion_05_building_block():
    rng = np.random.default_rng(5)
    X = np.exp(rng.uniform(-3.0, 3.0, (500, SPACE.n)))
    worst = 0.0
    for r in ALL_FAMILIES:
        m = DualMeasure(r, QS)
        for x in X:
            xp = PositivePosition(SPACE, x)
            a, b = dual_eval(m, xp), dual_eval_building_block(m, xp)
            worst = max(worst, abs(a - b) / max(1.0, abs(a)))
    report(5, worst <= 1e-12, f"{len(ALL_FAMILIES)} families x 500 positions, max rel diff = {worst:.2e}")


def test_criterion_06_r_recovery():
    two = ProbSpace.uniform(2)
    qs = [Scenario.reference(two), Scenario(two, [0.8, 1.2])]
    fams = [RFunctional.coherent(), RFunctional.convex_penalty([0.4]), RFunctional.floor(0.3)]
    ts = np.linspace(-2.0, 2.0, 21)
    t0 = time.perf_counter()
    worst_rec, worst_orc, worst_order = 0.0, 0.0, -math.inf
    for q in qs:
        for r in fams:
            f = DualMeasure(r, ScenarioSet([q])).functional()
            for t in ts:
                truth = float(r(t, 0))
                rec = recover_r(f, q, float(t))
                orc = recover_r_grid_oracle(f, q, float(t))
                worst_rec = max(worst_rec, abs(rec - truth))
                worst_orc = max(worst_orc, abs(rec - orc))
                worst_order = max(worst_order, rec - orc)
    elapsed = time.perf_counter() - t0
    ok = worst_rec <= 2e-4 and worst_orc <= 2e-4 and worst_order <= 1e-12 and elapsed < 30.0
    report(6, ok, f"max |rec - R| = {worst_rec:.2e}, max |rec - oracle| = {worst_orc:.2e}, {elapsed:.2f} s")


def test_criterion_07_law_invariant():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    w_li, w_mix, w_mass = 0.0, 0.0, 0.0
    for n in (2, 3, 4, 5):
        space = ProbSpace.uniform(n)
        for _ in range(10):
            d = rng.uniform(0.05, 3.0, n)
            q = Scenario(space, d / d.mean())
            x = PositivePosition(space, np.exp(rng.uniform(-3.0, 3.0, n)))
            for r in (RFunctional.coherent(), RFunctional.floor(0.2), RFunctional.log_floor(0.3)):
                m = DualMeasure(r, ScenarioSet([q]))
                a, b = law_invariant_dual_eval(m, x), law_invariant_bruteforce(m, x)
                w_li = max(w_li, abs(a - b) / max(1.0, abs(b)))
            mc = DualMeasure(RFunctional.coherent(), ScenarioSet([q]))
            ci = comonotone_integral(Position(space, np.log(x.values)), q)
            w_mix = max(w_mix, abs(math.log(arar_mixture_eval(mc, x)) - ci))
            w_mass = max(w_mass, abs(arar_mixing_measure(q)[1].sum() - 1.0))
    elapsed = time.perf_counter() - t0
    ok = w_li <= 1e-10 and w_mix <= 1e-9 and w_mass <= 1e-10 and elapsed < 10.0
    report(7, ok, f"law-invariant {w_li:.2e}, mixture {w_mix:.2e}, mass {w_mass:.2e}, {elapsed:.2f} s")


def test_criterion_08_acceptance_families():
    rng = np.random.default_rng(8)
    X = np.exp(rng.uniform(-2.0, 2.0, (200, SPACE.n)))
    cfg = SamplerConfig(n_samples=500, seed=8)
    round_bad, verdict_bad = [], []
    for s in builtin_specs():
        trho = s.functional(SPACE, QS)
        fam = family_from_measure(trho)
        got, want = measure_from_family(fam, X), trho.values(X)
        if not (np.all(got >= want * (1 - 1e-12)) and np.all(got <= want * fam.step_ratio * (1 + 1e-12))):
            round_bad.append(s.label)
        star = check_property(trho, "star_shaped", cfg).holds
        ph = check_property(trho, "positively_homogeneous", cfg).holds
        if check_B_star_shaped(fam, cfg).holds != star or check_B_positively_homogeneous(fam, cfg).holds != ph:
            verdict_bad.append(s.label)
    report(8, not round_bad and not verdict_bad,
           f"round trip failures: {round_bad or 'none'}, verdict mismatches: {verdict_bad or 'none'}")


def _portfolio_instances():
    logcoh = MeasureSpec("logconvex", {"c": [0.0, 0.0, 0.0]}).functional(SPACE, QS)
    arar = MeasureSpec("arar", {"alpha": 0.5}).functional(SPACE)
    dual = MeasureSpec("dual", {"r": {"family": "convex_penalty", "c": [0.0, 0.3, 0.6]}}).functional(SPACE, QS)
    measures = [logcoh, arar, dual]
    out = []
    for i in range(10):
        rng = np.random.default_rng(900 + i)
        n = 2 if i < 5 else 3
        assets = [PositivePosition(SPACE, np.exp(rng.normal(0.05, 0.4, SPACE.n))) for _ in range(n)]
        p = PortfolioProblem(assets, 0.0, measures[i % 3])
        mu = p.mean_log_returns
        out.append(p.with_r(float(mu.min() + rng.uniform(0.2, 0.8) * (mu.max() - mu.min()))))
    return out


def test_criterion_09_portfolio():
    t0 = time.perf_counter()
    worst_gap, frontier_bad = -math.inf, []
    for i, p in enumerate(_portfolio_instances()):
        got, ref = solve_portfolio(p), solve_portfolio_grid_oracle(p, 512)
        worst_gap = max(worst_gap, math.log(got.value) - math.log(ref.value))
        mu = p.mean_log_returns
        pts = efficient_frontier(p, np.linspace(mu.min(), mu.max(), 9))
        chk = check_frontier(p, pts, np.random.default_rng(i), n_triples=10, tol=1e-6)
        if not chk.holds:
            frontier_bad.append(i)
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= 1e-4 and not frontier_bad and elapsed < 60.0
    report(9, ok, f"max objective gap = {worst_gap:.2e}, frontier failures: {frontier_bad or 'none'}, "
                  f"{elapsed:.2f} s")


def test_criterion_10_rebalancing():
    rng = np.random.default_rng(10)
    paths = np.exp(rng.normal(0.0, 0.2, (3, 12)))
    w = np.array([0.2, 0.3, 0.5])
    lim = wealth_continuous_limit(w, paths)[-1]
    e100 = abs(wealth_rebalanced(w, paths, 1.0, 100)[-1] - lim)
    e1000 = abs(wealth_rebalanced(w, paths, 1.0, 1000)[-1] - lim)
    ratio = e100 / e1000
    logcoh = MeasureSpec("logconvex", {"c": [0.0, 0.0, 0.0]}).functional(SPACE, QS)
    va, vb, a = sample_wealth_pairs(SPACE.n, 200, rng)
    div = check_diversification_inequalities(logcoh, va, vb, a, "rebalanced")
    report(10, 8 <= ratio <= 12 and div.holds,
           f"error ratio 100 vs 1000 steps = {ratio:.3f}, rebalanced inequality on 200 pairs: {div.holds}")


def test_criterion_11_allocation():
    step = float(np.exp(8.0 / 160))
    w_prop, w_self, w_acc = 0.0, 0.0, 0.0
    zero_at_zero = [RFunctional.coherent(), RFunctional.ph_kink(1.0, 0.5),
                    RFunctional.user_table([[-4, -4], [0, 0], [1, 2], [4, 8]])]
    for i in range(50):
        rng = np.random.default_rng(1100 + i)
        units = [PositivePosition(SPACE, np.exp(rng.uniform(-1.0, 1.0, SPACE.n))) for _ in range(3)]
        total = PositivePosition(SPACE, np.sum([u.values for u in units], axis=0))
        coh = DualMeasure(RFunctional.coherent(), QS)
        rho = coh.values(total.values)
        prop = car_proportional(coh, units, total, "sum")
        sub = car_subdifferential(coh, units, total, "sum")
        w_prop = max(w_prop, float(np.max(np.abs(prop.proportions - sub.allocations / rho))))
        m = DualMeasure(zero_at_zero[i % 3], QS)
        self_alloc = car_proportional(m, [total], total).allocations[0]
        w_self = max(w_self, abs(self_alloc - m.values(total.values)) / m.values(total.values))
        acc = allocate_by_acceptance(coh, units, total, "sum").allocations
        ratio = acc / sub.allocations
        w_acc = max(w_acc, float(np.max(np.maximum(ratio / step, 1.0 / ratio))))
    ok = w_prop <= 1e-10 and w_self <= 1e-10 and w_acc <= 1.0 + 1e-12
    report(11, ok, f"prop vs sub/rho {w_prop:.2e}, self allocation {w_self:.2e}, "
                   f"acceptance/sub ratio within one grid step: {w_acc <= 1 + 1e-12}")
