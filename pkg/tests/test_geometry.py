import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from poissel.geometry import (
    CallableFactor, CovConstant, CovVector, Histogram, ParamTimeFactor, QuadratureRule,
    cov_norm_sq, hellinger_sq, l2_dist_cov, l2_dist_joint, l2_dist_time, l2_sq_quadrature,
    normalize_cov, normalize_time, product_l2_distance, time_norm_sq,
)
from poissel.point_process import (
    Constant, CovariateSet, ExpDecay, Grid, PiecewiseParam, PowerLaw, Product, ProductExp,
    SqrtFamily, TimeDomain,
)

UNIT = TimeDomain(0.0, 1.0)


def random_grid_surface(rng, n, nodes):
    return Grid(nodes, rng.uniform(0.0, 3.0, (n, nodes.size)))


def test_hellinger_examples(unit, one):
    assert hellinger_sq(Constant(2.0), Constant(2.0), one, unit) == 0.0
    X = CovariateSet(np.zeros((7, 1)))
    assert hellinger_sq(Constant(1.0), Constant(4.0), X, unit) == pytest.approx(0.5, abs=1e-15)
    # 1/2 int_0^1 (1 - sqrt t)^2 dt = 1/2 (1 - 4/3 + 1/2) = 1/12
    h = hellinger_sq(PowerLaw(1.0, 0.0), PowerLaw(1.0, 1.0), one, unit)
    assert h == pytest.approx(1.0 / 12.0, abs=1e-12)
    q = hellinger_sq(PowerLaw(1.0, 0.0), PowerLaw(1.0, 1.0), one, unit, closed_form=False)
    assert q == pytest.approx(1.0 / 12.0, abs=1e-6)


@pytest.mark.parametrize("u,v", [
    (PowerLaw(2.0, 0.3), PowerLaw(0.5, 1.7)),
    (ExpDecay(1.0, 1.0, 0), ExpDecay(3.0, 2.5, 0)),
    (ExpDecay(1.0, 1.0, 1), ExpDecay(2.0, 0.5, 1)),
    (ProductExp(1.0, 0.5, [0.3]), ProductExp(2.0, 1.5, [-0.4])),
    (PiecewiseParam([0, 2], [(1.0, 0.5), (2.0, 1.0)], 5),
     PiecewiseParam([0, 3], [(1.5, 0.0), (2.0, 1.5)], 5)),
])
def test_closed_form_matches_quadrature(u, v):
    T = TimeDomain(0.0, 2.0) if not isinstance(u, ExpDecay) else TimeDomain.truncated_decay(0.5)
    X = CovariateSet(np.linspace(-1, 1, 5)[:, None])
    c = hellinger_sq(u, v, X, T)
    lo, hi = T.t_min, T.t_max
    tot = 0.0
    for i in range(X.n):
        f = lambda t: (math.sqrt(u.evaluate(t, i, X)) - math.sqrt(v.evaluate(t, i, X))) ** 2
        tot += integrate.quad(f, lo, hi, limit=400, epsabs=1e-13)[0]
    assert c == pytest.approx(0.5 * tot / X.n, rel=1e-6)


def test_grid_metric_identity_and_symmetry(rng):
    nodes = np.linspace(0, 1, 9)
    X = CovariateSet(np.zeros((4, 1)))
    for _ in range(10):
        u, v = random_grid_surface(rng, 4, nodes), random_grid_surface(rng, 4, nodes)
        h = hellinger_sq(u, v, X, UNIT)
        assert h == hellinger_sq(v, u, X, UNIT)
        assert 2 * h == pytest.approx(l2_dist_joint(u, v, X, UNIT) ** 2, abs=1e-10)


def test_d2_triangle_inequality(rng):
    nodes = np.linspace(0, 1, 5)
    X = CovariateSet(np.zeros((3, 1)))
    for _ in range(20):
        a, b, c = (random_grid_surface(rng, 3, nodes) for _ in range(3))
        ab = l2_dist_joint(a, b, X, UNIT)
        bc = l2_dist_joint(b, c, X, UNIT)
        ac = l2_dist_joint(a, c, X, UNIT)
        assert ac <= ab + bc + 1e-12


def test_time_and_cov_distances(rng):
    e = np.linspace(0, 1, 3)
    f = Histogram(e, [math.sqrt(2), 0.0])
    g = Histogram(e, [0.0, math.sqrt(2)])
    assert l2_dist_time(f, f, UNIT) == 0.0
    assert l2_dist_time(f, g, UNIT) ** 2 == pytest.approx(2.0, abs=1e-14)
    X = CovariateSet(rng.uniform(-1, 1, (12, 2)))
    a, b = rng.normal(size=12), rng.normal(size=12)
    direct = math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)) / 12)
    assert l2_dist_cov(CovVector(a), CovVector(b), X) == pytest.approx(direct, abs=1e-12)


def test_product_distance_examples():
    X = CovariateSet(np.linspace(-1, 1, 6)[:, None])
    e = np.linspace(0, 1, 3)
    f = Histogram(e, [math.sqrt(2), 0.0])
    f2 = Histogram(e, [0.0, math.sqrt(2)])
    g = CovConstant(1.0)
    assert product_l2_distance(1.3, f, g, 1.3, f, g, UNIT, X) == 0.0
    assert product_l2_distance(1.5, f, g, 0.7, f2, g, UNIT, X) == pytest.approx(1.5 ** 2 + 0.7 ** 2)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_product_distance_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    n = 5
    X = CovariateSet(np.zeros((n, 1)))
    e = np.sort(np.concatenate([[0, 1], rng.uniform(0, 1, 3)]))
    f = normalize_time(Histogram(e, rng.uniform(0, 2, 4)), UNIT)
    f2 = normalize_time(Histogram(e, rng.uniform(0, 2, 4)), UNIT)
    g = normalize_cov(CovVector(rng.uniform(0, 2, n)), X)
    g2 = normalize_cov(CovVector(rng.uniform(0, 2, n)), X)
    k, k2 = rng.uniform(0, 3, 2)
    val = product_l2_distance(k, f, g, k2, f2, g2, UNIT, X)
    oracle = l2_sq_quadrature(Product(k, f, g), Product(k2, f2, g2), X, UNIT,
                              QuadratureRule(0.5 * (e[1:] + e[:-1]), np.diff(e)))
    assert val == pytest.approx(oracle, abs=1e-9)


def test_product_distance_requires_unit_factors():
    X = CovariateSet(np.zeros((2, 1)))
    f = Histogram([0, 1], [2.0])
    with pytest.raises(ValueError):
        product_l2_distance(1.0, f, CovConstant(1.0), 1.0, f, CovConstant(1.0), UNIT, X)


def test_normalization():
    f = normalize_time(Histogram([0, 1], [2.0]), UNIT)
    assert f(np.array([0.3])) == pytest.approx(1.0)
    g = normalize_time(CallableFactor(lambda t: t, "id"), UNIT)
    assert g(np.array([0.5])) == pytest.approx(math.sqrt(3) * 0.5, rel=1e-9)
    p = normalize_time(ParamTimeFactor("power", 1.0), UNIT)
    assert time_norm_sq(p, UNIT) == pytest.approx(1.0, abs=1e-14)
    X = CovariateSet(np.zeros((3, 1)))
    assert cov_norm_sq(normalize_cov(CovVector([1.0, 2.0, 2.0]), X), X) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        normalize_time(Histogram([0, 1], [0.0]), UNIT)
    with pytest.raises(ValueError):
        normalize_cov(CovVector([0.0, 0.0, 0.0]), X)


def test_simpson_rule_is_exact_for_cubics():
    Q = QuadratureRule.simpson(TimeDomain(0.0, 2.0), 65)
    assert Q.integrate(Q.nodes ** 3) == pytest.approx(4.0, abs=1e-12)


def test_duane_family_distance_per_process():
    # theta = (1, 0) vs (4, 1): int_0^1 (1 - 4 t)^2 dt = 1 - 4 + 16/3 = 7/3, half is 7/6
    X = CovariateSet(np.zeros((1, 1)))
    fam = SqrtFamily("duane")
    u = PiecewiseParam([0], [(1.0, 0.0)], 1, fam)
    v = PiecewiseParam([0], [(4.0, 1.0)], 1, fam)
    assert hellinger_sq(u, v, X, UNIT) == pytest.approx(7.0 / 6.0, abs=1e-12)
