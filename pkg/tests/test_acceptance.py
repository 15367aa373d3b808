"""Acceptance criteria 1 to 9, one PASS/FAIL line each (see the terminal summary)."""

import math
import time

import numpy as np
import pytest

from _oracles import brute_force_selection
from poissel import harness
from poissel import model_zoo as mz
from poissel.geometry import hellinger_sq
from poissel.point_process import Constant, CovariateSet, PowerLaw, ProductExp, TimeDomain, simulate
from poissel.robust_tests import TestConstants
from poissel.selector import SelectionConfig, mix_collections, run_selection

UNIT = TimeDomain(0.0, 1.0)

# pinned tolerances
QUAD_TOL = 1e-6
PRODUCT_TOL = 1e-9
LAMBERT_TOL = 1e-9
SE_SLACK = 3.0


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def _failed(checks):
    return [c.name for c in checks if not c.passed]


def test_criterion_1_identities(criterion):
    checks, secs = _timed(lambda: harness.identity_checks(QUAD_TOL, PRODUCT_TOL))
    checks = [c for c in checks if "bracket" not in c.name and "Lipschitz" not in c.name]
    bad = _failed(checks)
    worst = max(c.measured for c in checks)
    ok = criterion(1, not bad and secs < 10,
                   f"{len(checks)} identities, worst error {worst:.2e}, {secs:.1f}s {bad or ''}")
    assert ok


def test_criterion_2_brackets(criterion):
    checks, secs = _timed(lambda: harness.bracket_checks(0))
    bad = _failed(checks)
    ok = criterion(2, not bad and secs < 10, f"{len(checks)} bracket checks, {secs:.1f}s "
                                             f"{bad or ''}")
    assert ok


def test_criterion_3_concentration(criterion):
    checks, secs = _timed(lambda: harness.concentration_checks(10_000, 0))
    bad = _failed(checks)
    ok = criterion(3, not bad and secs < 120,
                   f"{len(checks)} tail and mean checks over 10^4 replicates, {secs:.1f}s "
                   f"{bad or ''}")
    assert ok


def _accept_rate(s, f, f2, X, z, constants, reps, seed):
    draws = harness.statistic_samples(s, f, f2, X, UNIT, reps, seed)
    return float(np.mean(draws > constants.b * z))


def test_criterion_4_test_error(criterion):
    t0 = time.perf_counter()
    reps = 1000
    faithful = TestConstants.paper_faithful()
    rows, ok = [], True
    cases = [(Constant(1.0), Constant(2.5), 20), (PowerLaw(1.0, 0.5), PowerLaw(2.0, 0.0), 30),
             (ProductExp(1.5, 0.2, [0.5]), ProductExp(2.5, 0.9, [-0.5]), 25)]
    for j, (f, f2, n) in enumerate(cases):
        X = CovariateSet(np.linspace(-0.9, 0.9, n)[:, None])
        h2 = hellinger_sq(f, f2, X, UNIT)
        for z in (0.0, h2 / 2, -h2 / 2):
            p = _accept_rate(f, f, f2, X, z, faithful, reps, 100 + j)
            bound = math.exp(-n * faithful.a * (h2 + z))
            se = math.sqrt(max(bound * (1 - bound), 1.0 / reps) / reps)
            ok &= p <= bound + SE_SLACK * se
            rows.append(f"{p:.3f}<={bound:.3f}")
    # calibrated constants, n H^2 >= 25
    cal = TestConstants.calibrated()
    X = CovariateSet(np.zeros((60, 1)))
    f, f2 = Constant(1.0), Constant(4.0)
    nh2 = 60 * hellinger_sq(f, f2, X, UNIT)
    err = _accept_rate(f, f, f2, X, 0.0, cal, reps, 7)
    ok &= nh2 >= 25 and err <= 0.05
    secs = time.perf_counter() - t0
    ok &= secs < 120
    assert criterion(4, ok, f"faithful constants {' '.join(rows)}; calibrated nH2={nh2:.1f} "
                            f"error={err:.3f}<=0.05, {secs:.1f}s")


def test_criterion_5_nets(criterion):
    checks, secs = _timed(lambda: harness.covering_checks(0))
    bad = _failed(checks)
    ok = criterion(5, not bad and secs < 60 and len(checks) == 16,
                   f"{len(checks)} covering/cardinality checks on 4 builders x 2 radii, "
                   f"{secs:.1f}s {bad or ''}")
    assert ok


def test_criterion_6_eta_solver(criterion):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(20):
        a, b, n = rng.uniform(0.2, 5), rng.uniform(0.2, 5), int(rng.integers(20, 5000))
        d = mz.LogDimension(a, b)
        closed = mz.eta_solver(d, n)
        bisect = mz.eta_solver(lambda e, d=d: d(e), n, tol=1e-15)
        worst = max(worst, abs(closed - bisect))
    const = mz.eta_solver(mz.ConstantDimension(2.0), 100) ** 2
    ok = criterion(6, worst <= LAMBERT_TOL and const == pytest.approx(0.02, abs=1e-15),
                   f"Lambert vs bisection worst {worst:.2e}<=1e-9 on 20 triples; "
                   f"D=2,n=100 gives eta^2={const:.12g}")
    assert ok


def test_criterion_7_selection(criterion):
    X = CovariateSet(np.zeros((60, 1)))
    g1, g2 = Constant(1.0), Constant(4.0)
    nh2 = X.n * hellinger_sq(g1, g2, X, UNIT)
    nets = [mz.CandidateNet([g1, g2], 0.1, 1.0, 0.0, "pair")]
    hits = sum(run_selection(nets, simulate(g1, X, UNIT, 1000 + r), X, UNIT).selected == g1
               for r in range(200))
    # m = 5 brute force from raw test outcomes
    rng = np.random.default_rng(7)
    Xb = CovariateSet(rng.uniform(-0.8, 0.8, (6, 1)))
    mismatches = 0
    reps = 40
    for r in range(reps):
        cands = [Constant(rng.uniform(0.5, 4)), Constant(rng.uniform(0.5, 4)),
                 PowerLaw(rng.uniform(0.5, 3), rng.uniform(0, 1)),
                 PowerLaw(rng.uniform(0.5, 3), rng.uniform(0, 1)),
                 ProductExp(rng.uniform(0.5, 2), rng.uniform(0, 1), [rng.uniform(-1, 1)])]
        eta = rng.choice([0.05, 0.2, 0.5], 5)
        nets = [mz.CandidateNet([c], e, 1.0, 0.0, f"v{j}") for j, (c, e) in
                enumerate(zip(cands, eta))]
        eps = float(rng.uniform(0.05, 2))
        sample = simulate(cands[int(rng.integers(5))], Xb, UNIT, 500 + r)
        cfg = SelectionConfig(epsilon=eps, binned=False)
        res = run_selection(nets, sample, Xb, UNIT, cfg)
        j, _ = brute_force_selection(cands, eta, sample, Xb, UNIT, cfg.constants, eps)
        mismatches += res.selected != cands[j]
    ok = criterion(7, nh2 >= 25 and hits >= 190 and mismatches == 0,
                   f"nH2={nh2:.1f}, truth chosen {hits}/200 (>=190); "
                   f"brute force mismatches {mismatches}/{reps}")
    assert ok


@pytest.mark.slow
def test_criterion_8_rates(criterion):
    t0 = time.perf_counter()
    lines, ok = [], True
    for name in ("parametric", "holder"):
        sc = harness.Scenario.load(name)
        rep = harness.run_benchmark(sc)
        checks = harness.evaluate_checks(sc, rep)
        ok &= bool(checks) and all(c.passed for c in checks)
        lines.append(f"{name} slope {harness.rate_slope(rep):.3f}")
    sc = harness.Scenario.load("changepoint")
    cp = harness.changepoint_report(sc)
    checks = harness.evaluate_checks(sc, cp=cp)
    ok &= len(checks) == 2 and all(c.passed for c in checks)
    lines.append("changepoint " + ", ".join(f"{c.name} {c.measured:.3f}" for c in checks))
    secs = time.perf_counter() - t0
    ok &= secs < 900
    assert criterion(8, ok, "; ".join(lines) + f"; {secs:.0f}s (<900s)")


def test_criterion_9_mixing(criterion):
    rng = np.random.default_rng(9)
    X = CovariateSet(rng.uniform(-0.8, 0.8, (12, 1)))
    same = 0
    for draw in range(10):
        k = int(rng.integers(2, 5))
        extra = [math.log(k)] * k
        groups = []
        for j in range(k):
            cands = [Constant(v) for v in np.round(rng.uniform(0.3, 5, rng.integers(2, 6)), 4)]
            cands += [PowerLaw(round(rng.uniform(0.5, 3), 4), round(rng.uniform(0, 1), 4))]
            groups.append([mz.CandidateNet(cands, float(rng.uniform(0.05, 0.5)), 1.0,
                                           float(rng.uniform(0, 1)), f"g{j}")])
        merged = [mz.CandidateNet(nt.candidates, nt.eta_bar, nt.dim_bound,
                                  nt.weight + extra[j], nt.label, nt.meta)
                  for j, nets in enumerate(groups) for nt in nets]
        mixed = mix_collections(list(zip(groups, extra)))
        sample = simulate(Constant(float(rng.uniform(0.5, 4))), X, UNIT, draw)
        cfg = SelectionConfig(epsilon=float(rng.uniform(0.05, 1)))
        same += run_selection(mixed, sample, X, UNIT, cfg).same_choice(
            run_selection(merged, sample, X, UNIT, cfg))
    assert criterion(9, same == 10, f"identical results on {same}/10 random draws")
