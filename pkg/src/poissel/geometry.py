"""Hellinger and L2 geometry on ``T x X`` with the product measure ``mu (x) nu_n``.

Factor objects (time factors and covariate factors) live here as well.  A
time factor is a callable on time arrays with ``sq_integral``/``sup_sq``; a
covariate factor exposes ``values_at(idx, X)``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .point_process import (
    Constant, CovariateSet, DomainError, ExpDecay, IntensitySurface, PiecewiseParam,
    PowerLaw, ProductExp, TimeDomain, _exp_integral, _exp_sup, _power_integral, _power_sup,
    exp_weight, power_weight,
)


# --------------------------------------------------------------------------
# Quadrature
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes and positive weights approximating integration against ``mu``."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).reshape(-1)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if nodes.shape != weights.shape or nodes.size == 0:
            raise ValueError("nodes and weights must be non-empty and of equal length")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("quadrature nodes must increase strictly")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrate along the last axis."""
        return np.asarray(values) @ self.weights

    @property
    def size(self) -> int:
        return self.nodes.size

    @classmethod
    def point(cls, T: TimeDomain) -> "QuadratureRule":
        return cls(np.array([T.t_min]), np.array([1.0]))

    @classmethod
    def simpson(cls, T: TimeDomain, per_unit: int = 1025) -> "QuadratureRule":
        """Composite Simpson on a uniform closed grid with about ``per_unit`` nodes per unit length."""
        if T.point_mass:
            return cls.point(T)
        m = max(2, int(math.ceil((per_unit - 1) * T.length / 2.0)))
        x = np.linspace(T.t_min, T.t_max, 2 * m + 1)
        h = (T.t_max - T.t_min) / (2 * m)
        w = np.full(x.size, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        return cls(x, w * h / 3.0)

    @classmethod
    def gauss(cls, T: TimeDomain, cells: int = 16, order: int = 8,
              grade_levels: int = 0, edges: Sequence[float] | None = None) -> "QuadratureRule":
        """Composite Gauss-Legendre.

        ``cells`` uniform cells split the domain (so dyadic breakpoints are cell
        edges when ``cells`` is a power of two).  ``grade_levels`` further
        halves the first cell repeatedly, which resolves integrable
        singularities at ``t_min``.  Explicit ``edges`` override both.
        """
        if T.point_mass:
            return cls.point(T)
        if edges is None:
            e = list(np.linspace(T.t_min, T.t_max, cells + 1))
            if grade_levels > 0:
                first = e[1] - e[0]
                graded = [T.t_min + first * 0.5 ** j for j in range(grade_levels, 0, -1)]
                e = [e[0]] + graded + e[1:]
            edges = e
        edges = np.asarray(edges, dtype=float)
        g, gw = np.polynomial.legendre.leggauss(order)
        lo, hi = edges[:-1, None], edges[1:, None]
        nodes = (0.5 * (hi - lo) * g[None, :] + 0.5 * (hi + lo)).reshape(-1)
        weights = (0.5 * (hi - lo) * gw[None, :]).reshape(-1)
        total = T.length
        weights = weights * (total / weights.sum())
        return cls(nodes, weights)

    @classmethod
    def default(cls, T: TimeDomain) -> "QuadratureRule":
        """Accurate general-purpose rule: 16 uniform cells, 10 points each, 40 graded cells near ``t_min``."""
        return cls.gauss(T, cells=16, order=10, grade_levels=40)

    @classmethod
    def coarse(cls, T: TimeDomain) -> "QuadratureRule":
        """Cheaper rule for selection work spaces."""
        return cls.gauss(T, cells=8, order=6, grade_levels=12)


def default_rule(T: TimeDomain, Q: QuadratureRule | None) -> QuadratureRule:
    if Q is not None:
        return Q
    return QuadratureRule.point(T) if T.point_mass else QuadratureRule.default(T)


# --------------------------------------------------------------------------
# Factors
# --------------------------------------------------------------------------


def _hash_arrays(*arrays: np.ndarray) -> str:
    h = hashlib.blake2b(digest_size=10)
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=float).tobytes())
    return h.hexdigest()


class Histogram:
    """Piecewise-constant function on the cells ``[edges[j], edges[j+1])`` (last cell closed).

    Used for time factors, and as a covariate factor via the first covariate
    coordinate.
    """

    index_dependent = False

    def __init__(self, edges: Sequence[float], values: Sequence[float]):
        e = np.asarray(edges, dtype=float)
        v = np.asarray(values, dtype=float)
        if e.ndim != 1 or v.shape != (e.size - 1,) or np.any(np.diff(e) <= 0):
            raise ValueError("need strictly increasing edges and one value per cell")
        e.setflags(write=False)
        v.setflags(write=False)
        self.edges, self.values = e, v

    def __call__(self, t: np.ndarray) -> np.ndarray:
        j = np.clip(np.searchsorted(self.edges, t, side="right") - 1, 0, self.values.size - 1)
        out = self.values[j]
        inside = (t >= self.edges[0]) & (t <= self.edges[-1])
        return np.where(inside, out, 0.0)

    def values_at(self, idx: np.ndarray, X: CovariateSet) -> np.ndarray:
        return self(X.points[np.asarray(idx), 0])

    def sq_integral(self, T: TimeDomain) -> float:
        lo = np.clip(self.edges[:-1], T.t_min, T.t_max)
        hi = np.clip(self.edges[1:], T.t_min, T.t_max)
        return float(np.sum(self.values ** 2 * (hi - lo)))

    def sup_sq(self, T: TimeDomain) -> float:
        return float(np.max(self.values ** 2))

    def scaled(self, c: float) -> "Histogram":
        return Histogram(self.edges, self.values * c)

    def descriptor(self) -> tuple:
        return ("hist", self.values.size, _hash_arrays(self.edges, self.values))

    def to_dict(self) -> dict:
        return {"kind": "hist", "edges": self.edges.tolist(), "values": self.values.tolist()}


class ParamTimeFactor:
    """``c * w_b(t)`` with ``w_b`` either ``t^b`` or ``t^(k/2) e^(-b t)``."""

    index_dependent = False

    def __init__(self, family: str, b: float, k: int = 0, scale: float = 1.0):
        if family not in ("power", "exp"):
            raise ValueError(f"unknown time family {family!r}")
        self.family, self.b, self.k, self.scale = family, float(b), int(k), float(scale)

    def __call__(self, t):
        w = power_weight(t, self.b) if self.family == "power" else exp_weight(t, self.b, self.k)
        return self.scale * w

    def raw_sq_integral(self, T: TimeDomain) -> float:
        if T.point_mass:
            return float(self(np.array(T.t_min)) / self.scale) ** 2
        if self.family == "power":
            return _power_integral(2 * self.b, T.t_min, T.t_max)
        return _exp_integral(2 * self.b, 2 * self.k, T.t_min, T.t_max)

    def sq_integral(self, T: TimeDomain) -> float:
        return self.scale ** 2 * self.raw_sq_integral(T)

    def sup_sq(self, T: TimeDomain) -> float:
        if self.family == "power":
            return self.scale ** 2 * _power_sup(2 * self.b, T)
        return self.scale ** 2 * _exp_sup(2 * self.b, 2 * self.k, T)

    def scaled(self, c: float) -> "ParamTimeFactor":
        return ParamTimeFactor(self.family, self.b, self.k, self.scale * c)

    def descriptor(self) -> tuple:
        return ("param_time", self.family, self.k, repr(self.b), repr(self.scale))

    def to_dict(self) -> dict:
        return {"kind": "param_time", "family": self.family, "b": self.b, "k": self.k,
                "scale": self.scale}


class CallableFactor:
    """Arbitrary vectorised time function; integrals fall back to quadrature."""

    index_dependent = False

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], label: str, scale: float = 1.0,
                 sup: float | None = None):
        self.fn, self.label, self.scale, self.sup = fn, label, float(scale), sup

    def __call__(self, t):
        return self.scale * self.fn(np.asarray(t, dtype=float))

    def values_at(self, idx, X):
        return self.scale * self.fn(X.points[np.asarray(idx), 0])

    def sq_integral(self, T: TimeDomain) -> float | None:
        return None

    def sup_sq(self, T: TimeDomain) -> float:
        if self.sup is None:
            Q = QuadratureRule.simpson(T, 4097)
            return float(np.max(self(Q.nodes) ** 2))
        return (self.scale * self.sup) ** 2

    def scaled(self, c: float) -> "CallableFactor":
        return CallableFactor(self.fn, self.label, self.scale * c, self.sup)

    def descriptor(self) -> tuple:
        return ("callable", self.label, repr(self.scale))

    def to_dict(self) -> dict:
        raise ValueError("callable factors cannot be serialised")


class CovVector:
    """Covariate factor given by its values ``g(x_1), ..., g(x_n)``."""

    index_dependent = True

    def __init__(self, values: Sequence[float]):
        v = np.asarray(values, dtype=float).reshape(-1)
        v.setflags(write=False)
        self.values = v

    def values_at(self, idx, X):
        if X.n != self.values.size:
            raise DomainError("covariate factor defined for a different n")
        return self.values[np.asarray(idx)]

    def scaled(self, c: float) -> "CovVector":
        return CovVector(self.values * c)

    def descriptor(self) -> tuple:
        return ("cov_vector", self.values.size, _hash_arrays(self.values))

    def to_dict(self) -> dict:
        return {"kind": "cov_vector", "values": self.values.tolist()}


class CovConstant:
    """Covariate factor equal to a constant."""

    index_dependent = False

    def __init__(self, value: float = 1.0):
        self.value = float(value)

    def values_at(self, idx, X):
        return np.full(np.shape(idx), self.value)

    def scaled(self, c: float) -> "CovConstant":
        return CovConstant(self.value * c)

    def descriptor(self) -> tuple:
        return ("cov_const", repr(self.value))

    def to_dict(self) -> dict:
        return {"kind": "cov_const", "value": self.value}


def factor_from_dict(d: dict):
    kind = d["kind"]
    if kind == "hist":
        return Histogram(d["edges"], d["values"])
    if kind == "param_time":
        return ParamTimeFactor(d["family"], d["b"], d.get("k", 0), d.get("scale", 1.0))
    if kind == "cov_vector":
        return CovVector(d["values"])
    if kind == "cov_const":
        return CovConstant(d["value"])
    raise ValueError(f"unknown factor kind {kind!r}")


# --------------------------------------------------------------------------
# Norms and normalisation
# --------------------------------------------------------------------------


def time_norm_sq(f, T: TimeDomain, Q: QuadratureRule | None = None) -> float:
    """``||f||_t^2``."""
    val = f.sq_integral(T) if hasattr(f, "sq_integral") else None
    if val is not None:
        return float(val)
    Q = default_rule(T, Q)
    return float(Q.integrate(np.asarray(f(Q.nodes)) ** 2))


def cov_norm_sq(g, X: CovariateSet) -> float:
    """``||g||_x^2 = n^-1 sum g(x_i)^2``."""
    v = g.values_at(np.arange(X.n), X)
    return float(np.mean(np.asarray(v) ** 2))


def normalize_time(f, T: TimeDomain, Q: QuadratureRule | None = None):
    """Rescale a time factor to unit norm."""
    ns = time_norm_sq(f, T, Q)
    if not ns > 0:
        raise ValueError("cannot normalise the zero function")
    return f.scaled(1.0 / math.sqrt(ns))


def normalize_cov(g, X: CovariateSet):
    """Rescale a covariate factor to unit norm."""
    ns = cov_norm_sq(g, X)
    if not ns > 0:
        raise ValueError("cannot normalise the zero function")
    return g.scaled(1.0 / math.sqrt(ns))


# --------------------------------------------------------------------------
# Distances
# --------------------------------------------------------------------------


def _process_groups(surfaces: Sequence[IntensitySurface], X: CovariateSet):
    """Representative process indices and their multiplicities."""
    if any(s.index_dependent for s in surfaces):
        return np.arange(X.n), np.ones(X.n)
    first, inverse = X.distinct()
    return first, np.bincount(inverse, minlength=first.size).astype(float)


def _check_n(surfaces, X: CovariateSet) -> None:
    for s in surfaces:
        if isinstance(s, PiecewiseParam) and s.n != X.n:
            raise DomainError("surface defined for a different number of processes")


def sqrt_table(s: IntensitySurface, reps: np.ndarray, Q: QuadratureRule,
               X: CovariateSet) -> np.ndarray:
    vals = s.sqrt(Q.nodes[None, :], reps[:, None], X)
    vals = np.broadcast_to(vals, (reps.size, Q.size))
    if np.any(vals < 0) or np.any(np.isnan(vals)):
        raise DomainError("negative or undefined square-root intensity")
    return vals


def l2_sq_quadrature(f: IntensitySurface, g: IntensitySurface, X: CovariateSet,
                     T: TimeDomain, Q: QuadratureRule | None = None) -> float:
    """``n^-1 sum_i int (sqrt f - sqrt g)^2 dmu`` by quadrature."""
    _check_n((f, g), X)
    Q = default_rule(T, Q)
    reps, mult = _process_groups((f, g), X)
    d = sqrt_table(f, reps, Q, X) - sqrt_table(g, reps, Q, X)
    return float(mult @ (d * d @ Q.weights)) / X.n


def _as_product_exp(s: IntensitySurface, k2: int):
    if isinstance(s, ProductExp):
        return s
    if isinstance(s, PowerLaw):
        return ProductExp(s.a, s.b, np.zeros(k2), "power")
    if isinstance(s, ExpDecay):
        return ProductExp(s.a, s.b, np.zeros(k2), "exp", s.k)
    if isinstance(s, Constant):
        return ProductExp(s.lam, 0.0, np.zeros(k2), "power")
    return None


def _weight_integral(family: str, b: float, k: int, T: TimeDomain) -> float:
    if family == "power":
        return _power_integral(b, T.t_min, T.t_max)
    return _exp_integral(b, k, T.t_min, T.t_max)


def l2_sq_closed_form(f: IntensitySurface, g: IntensitySurface, X: CovariateSet,
                      T: TimeDomain) -> float | None:
    """Closed-form ``n^-1 sum_i int (sqrt f - sqrt g)^2 dmu`` for same-family pairs, else ``None``."""
    if T.point_mass:
        return None
    if isinstance(f, PiecewiseParam) and isinstance(g, PiecewiseParam):
        if f.family != g.family or f.n != g.n or f.n != X.n:
            return None
        if any(p[0] < 0 for p in f.params + g.params):
            return None
        fam = f.family
        pf, pg = f._p[f._seg], g._p[g._seg]
        pairs, counts = np.unique(np.hstack([pf, pg]), axis=0, return_counts=True)
        total = 0.0
        for (a1, a2, c1, c2), c in zip(pairs, counts):
            cross_b = a2 + c2
            if fam.name == "duane":
                cross = a1 * c1 * _power_integral(cross_b, T.t_min, T.t_max)
            else:
                cross = a1 * c1 * _exp_integral(cross_b, 2 * fam.k, T.t_min, T.t_max)
            total += c * (fam.sq_integral(a1, a2, T) + fam.sq_integral(c1, c2, T) - 2 * cross)
        return max(total, 0.0) / X.n
    pf, pg = _as_product_exp(f, X.dim), _as_product_exp(g, X.dim)
    if pf is None or pg is None:
        return None
    if pf.family != pg.family or (pf.family == "exp" and pf.k != pg.k):
        return None
    fam, k = pf.family, pf.k
    try:
        If = _weight_integral(fam, pf.b, k, T)
        Ig = _weight_integral(fam, pg.b, k, T)
        Ic = _weight_integral(fam, 0.5 * (pf.b + pg.b), k, T)
    except DomainError:
        return None
    reps, mult = _process_groups((pf, pg), X)
    cf = pf.a * pf.cov_weight(reps, X)
    cg = pg.a * pg.cov_weight(reps, X)
    per = cf * If + cg * Ig - 2.0 * np.sqrt(cf * cg) * Ic
    return max(float(mult @ per) / X.n, 0.0)


def hellinger_sq(u: IntensitySurface, v: IntensitySurface, X: CovariateSet, T: TimeDomain,
                 Q: QuadratureRule | None = None, closed_form: bool = True) -> float:
    """``H^2(u, v) = (2n)^-1 sum_i int (sqrt u - sqrt v)^2 dmu``.

    Uses the closed form when both surfaces belong to the same parametric
    family (and ``closed_form`` is true), quadrature otherwise.  Symmetric in
    its arguments.
    """
    if u == v:
        return 0.0
    if closed_form:
        # order arguments canonically so the result is exactly symmetric
        a, b = sorted((u, v), key=lambda s: s.ident)
        val = l2_sq_closed_form(a, b, X, T)
        if val is not None:
            return 0.5 * val
    a, b = sorted((u, v), key=lambda s: s.ident)
    return 0.5 * l2_sq_quadrature(a, b, X, T, Q)


def l2_dist_joint(f: IntensitySurface, g: IntensitySurface, X: CovariateSet, T: TimeDomain,
                  Q: QuadratureRule | None = None) -> float:
    """``d_2`` between the square roots of two surfaces, always by quadrature."""
    return math.sqrt(l2_sq_quadrature(f, g, X, T, Q))


def _hist_l2_sq(f: Histogram, g: Histogram, T: TimeDomain) -> float:
    e = np.union1d(f.edges, g.edges)
    e = np.clip(e, T.t_min, T.t_max)
    mid = 0.5 * (e[:-1] + e[1:])
    d = f(mid) - g(mid)
    return float(np.sum(d * d * np.diff(e)))


def l2_dist_time(f, g, T: TimeDomain, Q: QuadratureRule | None = None) -> float:
    """``d_t(f, g)``; exact for pairs of histograms."""
    if isinstance(f, Histogram) and isinstance(g, Histogram):
        return math.sqrt(_hist_l2_sq(f, g, T))
    Q = default_rule(T, Q)
    d = np.asarray(f(Q.nodes)) - np.asarray(g(Q.nodes))
    return math.sqrt(float(Q.integrate(d * d)))


def l2_dist_cov(f, g, X: CovariateSet) -> float:
    """``d_x(f, g)``."""
    idx = np.arange(X.n)
    d = np.asarray(f.values_at(idx, X)) - np.asarray(g.values_at(idx, X))
    return math.sqrt(float(np.mean(d * d)))


def product_l2_distance(kappa: float, f, g, kappa2: float, f2, g2, T: TimeDomain,
                        X: CovariateSet, Q: QuadratureRule | None = None,
                        rtol: float = 1e-8) -> float:
    """Squared ``d_2`` between ``kappa f g`` and ``kappa2 f2 g2`` for unit-norm factors.

    Returns ``(kappa-kappa2)^2 + kappa kappa2 (dt^2 + dx^2 - dt^2 dx^2 / 2)``.
    """
    for h in (f, f2):
        if abs(time_norm_sq(h, T, Q) - 1.0) > rtol:
            raise ValueError("time factors must have unit norm")
    for h in (g, g2):
        if abs(cov_norm_sq(h, X) - 1.0) > rtol:
            raise ValueError("covariate factors must have unit norm")
    dt2 = l2_dist_time(f, f2, T, Q) ** 2
    dx2 = l2_dist_cov(g, g2, X) ** 2
    return (kappa - kappa2) ** 2 + kappa * kappa2 * (dt2 + dx2 - 0.5 * dt2 * dx2)
