import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize

from poissel import model_zoo as mz
from poissel.geometry import hellinger_sq
from poissel.point_process import CovariateSet, PiecewiseParam, SqrtFamily, TimeDomain
from poissel.robust_tests import TestConstants

UNIT = TimeDomain(0.0, 1.0)


# profiles -------------------------------------------------------------------------


def _normalized_quad(w, b, b2, hi=np.inf):
    def norm(bb):
        return math.sqrt(integrate.quad(lambda t: w(t, bb) ** 2, 0, hi, limit=400)[0])
    n1, n2 = norm(b), norm(b2)
    return integrate.quad(lambda t: (w(t, b) / n1 - w(t, b2) / n2) ** 2, 0, hi, limit=400)[0]


def test_power_profile_values():
    p = mz.powerlaw_profile()
    assert p.normalized_sq_distance(0.7, 0.7) == 0.0
    d = p.normalized_sq_distance(0.0, 1.5)
    assert d == pytest.approx(0.4, abs=1e-14)
    assert d == pytest.approx(_normalized_quad(lambda t, b: t ** b, 0.0, 1.5, 1.0), abs=1e-9)
    assert (p.rho_lower(1.5) * 1.5) ** 2 == pytest.approx(0.140625)
    assert (p.rho_upper(0.0) * 1.5) ** 2 == pytest.approx(2.25)


def test_exp_profile_values():
    p = mz.expfamily_profile(0)
    d = p.normalized_sq_distance(1.0, 4.0)
    assert d == pytest.approx(2 * (1 - 2 * 2 / 5), abs=1e-14)
    oracle = _normalized_quad(lambda t, b: math.exp(-b * t), 1.0, 4.0)
    assert d == pytest.approx(oracle, abs=1e-9)
    p1 = mz.expfamily_profile(1)
    oracle1 = _normalized_quad(lambda t, b: math.sqrt(t) * math.exp(-b * t), 0.5, 2.0)
    assert p1.normalized_sq_distance(0.5, 2.0) == pytest.approx(oracle1, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(b=st.floats(-0.45, 5), b2=st.floats(-0.45, 5))
def test_power_bracket(b, b2):
    p = mz.powerlaw_profile()
    d = math.sqrt(p.normalized_sq_distance(b, b2))
    gap = abs(b - b2)
    assert p.rho_lower(max(b, b2)) * gap <= d + 1e-12
    assert d <= p.rho_upper(min(b, b2)) * gap + 1e-12


@settings(max_examples=50, deadline=None)
@given(b=st.floats(0.05, 8), b2=st.floats(0.05, 8), k=st.sampled_from([0, 1]))
def test_exp_bracket(b, b2, k):
    p = mz.expfamily_profile(k)
    d = math.sqrt(p.normalized_sq_distance(b, b2))
    gap = abs(b - b2)
    assert p.rho_lower(max(b, b2)) * gap <= d + 1e-12
    assert d <= p.rho_upper(min(b, b2)) * gap + 1e-12


# dimensions and radii ------------------------------------------------------------------


def test_eta_solver_constant():
    assert mz.eta_solver(mz.ConstantDimension(2.0), 100) ** 2 == pytest.approx(0.02, abs=1e-16)
    assert mz.eta_solver(mz.ConstantDimension(0.5), 50) ** 2 == pytest.approx(0.01, abs=1e-16)


def _bisect(a, b, n):
    fn = mz.LogDimension(a, b)
    return optimize.brentq(lambda e: fn(e) / (e * e) - n, 1e-9, 1.0 - 1e-12, xtol=1e-15,
                           rtol=1e-15)


@pytest.mark.parametrize("a,b,n", [(1.0, 1.0, 100), (0.5, 2.0, 40), (3.0, 0.2, 1000)])
def test_eta_solver_lambert_vs_bisection(a, b, n):
    assert mz.eta_solver(mz.LogDimension(a, b), n) == pytest.approx(_bisect(a, b, n), abs=1e-9)


def test_lambert_w_matches_scipy():
    from scipy.special import lambertw
    for x in (1e-6, 0.3, 1.0, 7.5, 1e4, 1e12):
        assert mz.lambert_w(x) == pytest.approx(float(lambertw(x).real), rel=1e-14)


def test_radius_from_weight():
    c = TestConstants.calibrated()
    assert mz.radius_from_weight(0.1, 1.0, 100, c) == pytest.approx(21 * math.sqrt(1.2) * 0.1)
    assert mz.radius_from_weight(0.1, 1.0, 100, c) == pytest.approx(2.3004347, abs=1e-7)
    assert mz.radius_from_weight(0.05, 0.0, 10, c) == pytest.approx(
        21 * math.sqrt(3 / (5 * 0.5)) * 0.05)
    prev = 0.0
    for w in np.linspace(0, 50, 20):
        r = mz.radius_from_weight(0.01, w, 100, c)
        assert r >= prev
        prev = r


def test_radius_rule_direct():
    c = TestConstants.calibrated()
    rule = mz.RadiusRule("direct", 4.0)
    assert rule.radius(10.0, 1.0, 100, c) ** 2 == pytest.approx(4.0 * 2.0 / 100)
    assert mz.RadiusRule("direct").radius(10.0, 1.0, 100, c) ** 2 == pytest.approx(42 * 2 / 100)


def test_robust_dimension():
    assert mz.robust_dimension(0.3, 1, [1.0], [1.0], [1.0], [0]) == 0.5
    assert mz.robust_dimension(2.0, 1, [1.0], [1.0], [1.0], [1]) == 0.5
    vals = [mz.robust_dimension(e, 2, [1.0, 2.0], [1.0, 0.5], [1.0, 1.0], [3, 2])
            for e in np.logspace(-3, 1, 30)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


# nets -------------------------------------------------------------------------------


def test_linear_net_one_dimension():
    net = mz.build_linear_net(1, (0.0, 1.0), 0.25, UNIT)
    assert np.allclose(net.candidates.coefficients()[:, 0], [0, 0.25, 0.5, 0.75, 1.0])
    assert net.eta_bar == pytest.approx(0.25 / math.sqrt(2))


def test_linear_net_lazy_candidates_match_coefficients():
    net = mz.build_linear_net(4, (0.0, 1.0), 0.6, UNIT)
    C = net.candidates.coefficients()
    assert C.shape == (len(net), 4)
    assert len({tuple(r) for r in C}) == len(net)
    for j in (0, 7, len(net) - 1):
        assert np.array_equal(net.candidates[j].coeffs, C[j])
    B = net.candidates.basis_at(np.array([0.1, 0.6]), np.array([0, 0]))
    vals = net.candidates.sqrt_block(B, 0, len(net))
    X = CovariateSet([[0.0]])
    assert np.allclose(vals[5], net.candidates[5].sqrt(np.array([0.1, 0.6]), 0, X))


@pytest.mark.parametrize("dim,eta", [(1, 0.25), (2, 0.3), (4, 0.5)])
def test_linear_net_covering_and_cardinality(dim, eta, rng):
    net = mz.build_linear_net(dim, (0.0, 1.0), eta, UNIT)
    members = mz.sample_members(net, rng, 200)
    assert mz.check_covering(net, members).passed
    assert mz.check_cardinality(net, mz.sample_members(net, rng, 20)).passed


def test_linear_net_covering_measured_in_function_space(rng):
    # the coefficient metric equals the L2 metric of the square roots
    net = mz.build_linear_net(2, (0.0, 1.0), 0.3, UNIT)
    X = CovariateSet([[0.0]])
    c = rng.uniform(0, 1, 2)
    member = mz.LinearSqrt(net.meta["space"], c)
    d2 = mz.net_sq_distances(net, c)
    j = int(np.argmin(d2))
    assert 2 * hellinger_sq(member, net.candidates[j], X, UNIT) == pytest.approx(d2[j], abs=1e-10)


def test_linear_net_cap():
    with pytest.raises(mz.CapExceeded):
        mz.build_linear_net(8, (0.0, 1.0), 0.05, UNIT, cap=1000)


def test_covariate_space_is_orthonormal(rng):
    X = CovariateSet(rng.uniform(-1, 1, (40, 1)))
    V = mz.PiecewisePolySpace(2, 1, "cov", X=X, lo=-1.0, hi=1.0)
    G = V.basis_values.T @ V.basis_values / X.n
    assert np.allclose(G, np.eye(V.dim), atol=1e-12)


def test_time_space_is_orthonormal():
    V = mz.PiecewisePolySpace(2, 2, "time", T=UNIT)
    g, w = np.polynomial.legendre.leggauss(20)
    t = np.concatenate([0.125 * (g + 1) + 0.25 * c for c in range(4)])
    ww = np.concatenate([0.125 * w] * 4)
    B = V.basis(t)
    assert np.allclose(B.T @ (B * ww[:, None]), np.eye(V.dim), atol=1e-12)


def test_product_net(rng):
    T = UNIT
    X = CovariateSet(np.linspace(-1, 1, 9)[:, None])
    V1 = mz.PiecewisePolySpace(1, 0, "time", T=T)
    V2 = mz.PiecewisePolySpace(0, 2, "cov", X=X, lo=-1.0, hi=1.0)
    net = mz.build_product_net(V1, V2, 0.9, 1.5)
    assert net.dim_at() == pytest.approx(1.4 * (2 + 3 + 1))
    assert mz.check_covering(net, mz.sample_members(net, rng, 100)).passed
    # degenerate case: one sphere point per factor, scales k eta / sqrt 2
    W1 = mz.PiecewisePolySpace(0, 0, "time", T=T)
    deg = mz.build_product_net(W1, None, 1.5 * math.sqrt(2), 1.5)
    assert [c.kappa for c in deg.candidates] == pytest.approx([1.5])


def test_sparse_weights_sum():
    assert mz.sparse_weight(5, 2) == pytest.approx(3 + math.log(10))
    assert mz.sparse_weight(5, 2) == pytest.approx(5.302585, abs=1e-6)
    for k2 in (1, 3, 6):
        assert sum(math.exp(-mz.sparse_weight(k2, m)) for m in range(k2 + 1)) <= 1.0


def test_cox_net(rng):
    X = CovariateSet(np.array([[-0.5, 0.2], [0.1, -0.3], [0.6, 0.4], [0.0, 0.9]]))
    empty = mz.build_cox_net(mz.powerlaw_profile(), (0.0, 1.0), [], 1.0, 0.7, X, UNIT, 2.0,
                             "euclidean")
    assert all(np.all(np.asarray(c.theta) == 0) for c in empty.candidates)
    net = mz.build_cox_net(mz.powerlaw_profile(), (0.0, 1.0), [1], 1.0, 0.8, X, UNIT, 2.0,
                           "euclidean")
    mem = mz.sample_members(net, rng, 30)
    assert all(m[2][0] == 0 for m in mem)
    assert mz.check_covering(net, mem).passed


def test_partitions_and_weights():
    assert len(mz.enumerate_partitions(4, 4)) == 8
    assert mz.changepoint_weight(5, 2) == pytest.approx(2 + math.log(4))
    assert mz.changepoint_weight(5, 2) == pytest.approx(3.386294, abs=1e-6)
    assert mz.changepoint_weight(9, 1) == 1.0
    for n in (4, 7, 12):
        s = sum(math.exp(-mz.changepoint_weight(n, p.size))
                for p in mz.enumerate_partitions(n, n))
        assert s <= 1.0


def test_changepoint_collection_and_covering(rng):
    n = 5
    X = CovariateSet(np.zeros((n, 1)))
    fam = SqrtFamily("duane")
    grid = mz.duane_param_grid(0.6, 2.0, 2.0, 1.0)
    nets = mz.build_changepoint_collection(fam, grid, 2, n, 0.6 / math.sqrt(2))
    assert len(nets) == 1 + (n - 1)
    assert mz.weight_sum(nets) <= 1.0
    net = nets[2]
    mem = [PiecewiseParam(net.meta["partition"].starts,
                          [(rng.uniform(0, 2), rng.uniform(0, 1)) for _ in range(2)], n, fam)
           for _ in range(20)]
    assert mz.check_covering(net, mem, X, UNIT).passed
    # closed-form distances agree with the generic Hellinger routine
    d2 = mz.net_sq_distances(net, mem[0], X, UNIT)
    j = int(np.argmin(d2))
    assert d2[j] == pytest.approx(2 * hellinger_sq(mem[0], net.candidates[j], X, UNIT), abs=1e-10)


def test_duane_lipschitz(rng):
    r1, r2 = 3.0, 2.5
    R1, R2 = mz.duane_lipschitz(r1, r2)
    lo2 = -0.5 + 1.0 / r2
    for _ in range(50):
        th = (rng.uniform(-r1, r1), rng.uniform(lo2, lo2 + 3))
        th2 = (rng.uniform(-r1, r1), rng.uniform(lo2, lo2 + 3))
        d = math.sqrt(mz.duane_sq_distance(th, th2))
        quad = math.sqrt(integrate.quad(
            lambda t: (th[0] * t ** th[1] - th2[0] * t ** th2[1]) ** 2, 0, 1, limit=200)[0])
        assert d == pytest.approx(quad, rel=1e-6, abs=1e-9)
        assert d <= R1 * abs(th[0] - th2[0]) + R2 * abs(th[1] - th2[1]) + 1e-12


# approximation -----------------------------------------------------------------------


def test_holder_approximation():
    assert mz.holder_approx_error(lambda t: 1 + 2 * t - t ** 2, 2, 2) < 1e-10
    assert mz.holder_approx_error(lambda x, y: 1 + x - 2 * y, 1, 1, k=2) < 1e-10
    errs = [mz.holder_approx_error(lambda t: np.abs(t - 0.5), d, 0, points_per_cell=40)
            for d in range(1, 7)]
    ratios = [b / a for a, b in zip(errs, errs[1:])]
    assert all(abs(r - 0.5) <= 0.05 for r in ratios)
    # Lipschitz family: error / (L 2^-d) stays bounded by a fitted constant
    c = max(mz.holder_approx_error(lambda t, L=L: np.sin(L * t), d, 0) / (L * 2.0 ** -d)
            for L in (1.0, 3.0, 6.0) for d in range(2, 6))
    assert c <= 1 / math.sqrt(12) + 1e-3
