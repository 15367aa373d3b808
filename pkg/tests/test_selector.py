import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _oracles import brute_force_selection
from poissel import model_zoo as mz
from poissel.geometry import hellinger_sq
from poissel.point_process import (
    Constant, CovariateSet, PiecewiseParam, SqrtFamily, TimeDomain, simulate,
)
from poissel.robust_tests import TestConstants
from poissel.selector import (
    CandidateChain, SelectionConfig, changepoint_radii, eta_bar_of, flatten_collection,
    mix_collections, run_selection, select_changepoint,
)

UNIT = TimeDomain(0.0, 1.0)


def consts(*lams):
    return [Constant(v) for v in lams]


def net(cands, eta, label="net", weight=0.0):
    return mz.CandidateNet(list(cands), eta, 1.0, weight, label)


def test_eta_bar_of():
    f = Constant(2.0)
    assert eta_bar_of(f, [net([f], 0.3)]) == 0.3
    assert eta_bar_of(f, [net([f], 0.3), net([f, Constant(1.0)], 0.2)]) == 0.2
    with pytest.raises(KeyError):
        eta_bar_of(Constant(5.0), [net([f], 0.3)])


def test_duplicates_unified():
    cands, eta, labels = flatten_collection([net(consts(1, 2), 0.3, "a"),
                                             net(consts(2, 3), 0.2, "b")])
    assert len(cands) == 3
    assert list(eta) == [0.3, 0.2, 0.2]
    assert list(labels) == [0, 1, 1]


def test_single_candidate():
    X = CovariateSet(np.zeros((3, 1)))
    sample = simulate(Constant(1.0), X, UNIT, 0)
    res = run_selection([net(consts(4.0), 0.1)], sample, X, UNIT)
    assert res.selected == Constant(4.0)
    assert res.tests_run == 0


def test_config_validation():
    with pytest.raises(ValueError):
        SelectionConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        SelectionConfig(epsilon=4.5)
    assert SelectionConfig().constants == TestConstants.calibrated()


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), m=st.integers(2, 5))
def test_matches_brute_force(seed, m):
    rng = np.random.default_rng(seed)
    X = CovariateSet(np.zeros((4, 1)))
    cands = consts(*np.round(rng.uniform(0.5, 6, m), 6))
    if len({c.ident for c in cands}) < m:
        return
    etas = rng.choice([0.1, 0.3, 0.6], m)
    nets = [net([c], e, f"n{j}") for j, (c, e) in enumerate(zip(cands, etas))]
    sample = simulate(Constant(rng.uniform(0.5, 6)), X, UNIT, seed)
    eps = float(rng.uniform(0.05, 2))
    for engine in ("full", "pruned"):
        cfg = SelectionConfig(epsilon=eps, engine=engine, binned=False)
        res = run_selection(nets, sample, X, UNIT, cfg)
        j, gamma = brute_force_selection(cands, etas, sample, X, UNIT, cfg.constants, eps)
        assert res.selected == cands[j]
        if engine == "full":
            assert np.allclose(res.gamma, gamma, atol=1e-12)


def test_permutation_invariance(rng):
    X = CovariateSet(np.zeros((30, 1)))
    cands = consts(*np.linspace(0.5, 5, 12))
    sample = simulate(Constant(2.2), X, UNIT, 4)
    base = run_selection([net(cands, 0.2)], sample, X, UNIT).selected
    for _ in range(3):
        perm = [cands[i] for i in rng.permutation(len(cands))]
        assert run_selection([net(perm, 0.2)], sample, X, UNIT).selected == base


def test_two_candidates_consistency():
    X = CovariateSet(np.zeros((60, 1)))
    g1, g2 = Constant(1.0), Constant(4.0)
    assert 60 * hellinger_sq(g1, g2, X, UNIT) >= 25
    hits = sum(run_selection([net([g1, g2], 0.1)], simulate(g1, X, UNIT, r), X, UNIT).selected
               == g1 for r in range(100))
    assert hits >= 95


def test_engines_agree_on_histogram_collection():
    T = UNIT
    X = CovariateSet(np.zeros((40, 1)))
    nets = [mz.build_linear_net(2 ** d, (0.0, 2.0), 0.5, T).with_weight(math.log(3))
            for d in range(3)]
    truth = mz.LinearSqrt(mz.PiecewisePolySpace(2, 0, "time", T=T), [0.4, 0.9, 0.6, 0.3])
    for seed in range(3):
        sample = simulate(truth, X, T, seed)
        res = {e: run_selection(nets, sample, X, T, SelectionConfig(
            epsilon=0.05, penalty="squared", engine=e)) for e in ("full", "pruned")}
        f, p = res["full"], res["pruned"]
        assert (f.selected, f.index, f.value) == (p.selected, p.index, p.value)
        # lazy lattices and materialised lists give the same selection
        listed = [mz.CandidateNet(list(nt.candidates), nt.eta_bar, nt.dim_bound, nt.weight,
                                  nt.label, nt.meta) for nt in nets]
        mat = run_selection(listed, sample, X, T, SelectionConfig(
            epsilon=0.05, penalty="squared", engine="pruned"))
        assert mat.selected == res["pruned"].selected
        assert mat.value == res["pruned"].value


def test_lattice_chain_indexing():
    a = mz.build_linear_net(2, (0.0, 1.0), 0.5, UNIT).candidates
    chain = CandidateChain([consts(1.0, 2.0), a])
    assert len(chain) == 2 + len(a)
    assert chain[1] == Constant(2.0)
    assert chain[2 + 3] == a[3]


def test_result_is_json_serializable():
    X = CovariateSet(np.zeros((5, 1)))
    res = run_selection([net(consts(1, 2, 3), 0.2)], simulate(Constant(2.0), X, UNIT, 1), X,
                        UNIT, SelectionConfig(engine="full", keep_matrix=True))
    d = json.loads(json.dumps(res.to_json_dict()))
    assert d["selected"] == res.selected.ident
    assert len(d["rejection_sets"]) == 3


def test_reproducible():
    X = CovariateSet(np.zeros((10, 1)))
    nets = [net(consts(*np.linspace(0.5, 4, 8)), 0.3)]
    s = simulate(Constant(2.0), X, UNIT, 3)
    a, b = run_selection(nets, s, X, UNIT), run_selection(nets, s, X, UNIT)
    assert a.same_choice(b)


def test_mixing():
    c1 = [net(consts(1, 2), 0.3, "a", 0.5)]
    c2 = [net(consts(3, 4), 0.2, "b", 0.7)]
    mixed = mix_collections([(c1, math.log(2)), (c2, math.log(2))])
    assert [nt.weight for nt in mixed] == pytest.approx([0.5 + math.log(2), 0.7 + math.log(2)])
    with pytest.raises(ValueError):
        mix_collections([(c1, 0.1), (c2, 0.1)])
    X = CovariateSet(np.zeros((8, 1)))
    s = simulate(Constant(2.0), X, UNIT, 2)
    assert run_selection(mix_collections([(c1, 0.0)]), s, X, UNIT).same_choice(
        run_selection(c1, s, X, UNIT))


def test_changepoint_fast_path_matches_generic():
    n = 8
    X = CovariateSet(np.zeros((n, 1)))
    fam = SqrtFamily("duane")
    grid = np.array([(a, b) for a in (1.0, 2.5, 4.0) for b in (0.0, 1.0)])
    cfg = SelectionConfig(epsilon=0.05, penalty="squared")
    e1, e2 = changepoint_radii(n, grid.shape[0], cfg.constants, factor=2.0)
    nets = mz.build_changepoint_collection(fam, grid, 2, n, lambda p: e1 if p == 1 else e2)
    truth = PiecewiseParam([0, 5], [(1.0, 0.0), (4.0, 1.0)], n, fam)
    for seed in range(3):
        sample = simulate(truth, X, UNIT, seed)
        fast, _ = select_changepoint(fam, grid, sample, X, UNIT, e1, e2, cfg)
        slow = run_selection(nets, sample, X, UNIT, cfg)
        assert fast.selected == slow.selected
        assert fast.value == pytest.approx(slow.value, abs=1e-12)


def test_oracle_constant_stable_across_n():
    # excess loss over the best candidate, in units of the net radius squared
    cfg = SelectionConfig(epsilon=0.05, penalty="squared")
    ratios = []
    for n in (50, 200, 800):
        X = CovariateSet(np.zeros((n, 1)))
        eta = math.sqrt(2.0 / n)
        roots = np.arange(0.5, 3.0 + 1e-12, 2 * math.sqrt(2) * eta)
        nets = [net([Constant(r * r) for r in roots], eta, "grid")]
        rng = np.random.default_rng([1, n])
        excess = []
        for r in range(400):
            lam = rng.uniform(1.0, 4.0)
            sample = simulate(Constant(lam), X, UNIT, 10_000 * n + r)
            sel = run_selection(nets, sample, X, UNIT, cfg).selected
            best = min(roots, key=lambda v: abs(v - math.sqrt(lam)))
            excess.append(hellinger_sq(Constant(lam), sel, X, UNIT)
                          - hellinger_sq(Constant(lam), Constant(best ** 2), X, UNIT))
        ratios.append(np.mean(excess) / eta ** 2)
    c = float(np.mean(ratios))
    assert c > 0
    assert all(0.5 * c <= v <= 1.5 * c for v in ratios), (ratios, c)
