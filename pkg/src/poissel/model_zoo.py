"""Finite candidate nets with radius, dimension bound and prior weight.

Radius conventions: a builder's ``eta`` is a covering radius for ``d_2`` (the
L2 distance between square roots).  The stored ``CandidateNet.eta_bar`` is the
same radius in the Hellinger metric, ``eta / sqrt(2)``, because selection
compares it with Hellinger distances.
"""

from __future__ import annotations

import collections.abc as cabc
import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from scipy import special

from .geometry import (
    CovConstant, Histogram, QuadratureRule, _hash_arrays, cov_norm_sq, default_rule,
    hellinger_sq,
)
from .point_process import (
    CovariateSet, DomainError, IntensitySurface, PiecewiseParam, ProductExp, Product,
    SqrtFamily, TimeDomain, _exp_integral, _power_integral,
)
from .robust_tests import TestConstants

SQRT2 = math.sqrt(2.0)


class CapExceeded(RuntimeError):
    """A net or collection would exceed its configured size cap."""


# --------------------------------------------------------------------------
# Lipschitz profiles of parametric time families
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LipschitzProfile:
    """Bracket ``rho_lower(b v b') |b-b'| <= d_t(u_b/|u_b|, u_b'/|u_b'|) <= rho_upper(b ^ b') |b-b'|``."""

    name: str
    family: str  # "power" or "exp"
    k: int
    b0: float
    rho_lower: Callable[[float], float]
    rho_upper: Callable[[float], float]

    def normalized_sq_distance(self, b: float, b2: float) -> float:
        """Closed-form squared distance between the normalised members."""
        if b <= self.b0 or b2 <= self.b0:
            raise DomainError("parameter outside the profile interval")
        if self.family == "power":
            return 4 * (b - b2) ** 2 / ((1 + b + b2) * (math.sqrt(2 * b + 1)
                                                          + math.sqrt(2 * b2 + 1)) ** 2)
        return 2.0 * (1.0 - (2 * math.sqrt(b * b2)) ** (self.k + 1) / (b + b2) ** (self.k + 1))

    def domain(self) -> TimeDomain:
        if self.family == "power":
            return TimeDomain(0.0, 1.0)
        raise DomainError("the exponential family lives on [0, inf); truncate explicitly")

    def time_factor_norm_sq(self, b: float, T: TimeDomain) -> float:
        if self.family == "power":
            return _power_integral(2 * b, T.t_min, T.t_max)
        return _exp_integral(2 * b, self.k, T.t_min, T.t_max)


def powerlaw_profile() -> LipschitzProfile:
    """``u_b(t) = t^b`` on ``(0, 1]``, ``b > -1/2``."""
    rho = lambda u: 1.0 / (1.0 + 2.0 * u)  # noqa: E731
    return LipschitzProfile("power_law", "power", 0, -0.5, rho, rho)


def expfamily_profile(k: int = 0) -> LipschitzProfile:
    """``u_b(t) = t^(k/2) e^(-b t)`` on ``[0, inf)``, ``b > 0``."""
    if k not in (0, 1):
        raise ValueError("only k in {0, 1} is supported")
    return LipschitzProfile(f"exp_k{k}", "exp", k, 0.0, lambda u: 1.0 / (2.0 * u),
                            lambda u: math.sqrt(k + 1) / (2.0 * u))


# --------------------------------------------------------------------------
# Dimension functions and radii
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantDimension:
    value: float

    def __call__(self, eta: float) -> float:
        return self.value


@dataclass(frozen=True)
class LogDimension:
    """``D(eta) = 2 alpha + 2 beta log(1/eta)`` for ``eta < 1`` and ``2 alpha`` beyond."""

    alpha: float
    beta: float

    def __call__(self, eta: float) -> float:
        return 2 * self.alpha + 2 * self.beta * max(math.log(1.0 / eta), 0.0)


def lambert_w(x: float, tol: float = 1e-15, max_iter: int = 100) -> float:
    """Principal branch of ``w e^w = x`` for ``x >= 0`` by Halley iteration."""
    if x < 0:
        raise ValueError("only non-negative arguments are supported")
    if x == 0:
        return 0.0
    w = math.log1p(x) if x < math.e else math.log(x) - math.log(math.log(x))
    for _ in range(max_iter):
        ew = math.exp(w)
        f = w * ew - x
        step = f / (ew * (w + 1) - (w + 2) * f / (2 * w + 2))
        w -= step
        if abs(step) <= tol * (1 + abs(w)):
            return w
    raise ArithmeticError("Lambert iteration did not converge")


def eta_solver(dim_fn: Callable[[float], float], n: int, tol: float = 1e-13,
               max_iter: int = 400) -> float:
    """``inf {eta > 0 : D(eta) / eta^2 <= n}``."""
    if n < 1:
        raise ValueError("n must be positive")
    if isinstance(dim_fn, ConstantDimension):
        return math.sqrt(dim_fn.value / n)
    if isinstance(dim_fn, LogDimension):
        a, b = dim_fn.alpha, dim_fn.beta
        if b > 0:
            eta2 = (b / n) * lambert_w(math.exp(2 * a / b) * n / b)
            if eta2 < 1.0:
                return math.sqrt(eta2)
        return math.sqrt(2 * a / n)
    ok = lambda e: dim_fn(e) / (e * e) <= n  # noqa: E731
    hi = 1.0
    it = 0
    while not ok(hi):
        hi *= 2.0
        it += 1
        if it > 200:
            raise ArithmeticError("no admissible eta found")
    lo = hi / 2.0
    while ok(lo):
        lo /= 2.0
        it += 1
        if it > 400 or lo == 0:
            raise ArithmeticError("dimension function does not grow as eta -> 0")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
        if hi - lo <= tol * hi:
            return hi
    raise ArithmeticError("bisection did not converge")


def radius_from_weight(eta_V: float, weight: float, n: int, constants: TestConstants) -> float:
    """``max(21 sqrt(3/(5a)) eta_V, sqrt(21 weight / (n a)))``."""
    a = constants.a
    return max(21.0 * math.sqrt(3.0 / (5.0 * a)) * eta_V, math.sqrt(21.0 * weight / (n * a)))


@dataclass(frozen=True)
class RadiusRule:
    """How a net radius (Hellinger units) follows from its dimension bound and weight.

    ``mode="formula"`` applies :func:`radius_from_weight` to ``eta_V`` of the
    dimension function.  ``mode="direct"`` returns the smallest radius meeting
    ``a n eta^2 >= 21 D / 5`` and ``a n eta^2 >= 21 weight``, i.e.
    ``eta^2 = factor * max(D / 5, weight) / n`` with ``factor = 21 / a``
    unless ``factor`` is given.
    """

    mode: str = "direct"
    factor: float | None = None

    def radius(self, dim: float | Callable[[float], float], weight: float, n: int,
               constants: TestConstants) -> float:
        fn = dim if callable(dim) else ConstantDimension(float(dim))
        if self.mode == "formula":
            return radius_from_weight(eta_solver(fn, n), weight, n, constants)
        if self.mode != "direct":
            raise ValueError(f"unknown radius mode {self.mode!r}")
        factor = 21.0 / constants.a if self.factor is None else self.factor
        d = fn(eta_solver(fn, n))
        return math.sqrt(factor * max(d / 5.0, weight) / n)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "factor": self.factor}


def robust_dimension(eta: float, k: int, R: Sequence[float], alpha: Sequence[float],
                     rho: Sequence[float], dims: Sequence[int]) -> float:
    """``max(1/2, 1/4 sum_j log(1 + 2 (k R_j / eta)^(1/alpha_j) rho_j) dim_j)``."""
    if eta <= 0 or k < 1:
        raise ValueError("eta and k must be positive")
    if not (len(R) == len(alpha) == len(rho) == len(dims) == k):
        raise ValueError("one entry per parameter coordinate is required")
    total = 0.0
    for Rj, aj, rj, dj in zip(R, alpha, rho, dims):
        if Rj <= 0 or rj <= 0 or not 0 < aj <= 1 or dj < 0:
            raise ValueError("need R, rho > 0, alpha in (0, 1] and dims >= 0")
        total += math.log1p(2.0 * (k * Rj / eta) ** (1.0 / aj) * rj) * dj
    return max(0.5, 0.25 * total)


@dataclass(frozen=True)
class RobustDimension:
    """:func:`robust_dimension` as a function of ``eta``."""

    k: int
    R: tuple
    alpha: tuple
    rho: tuple
    dims: tuple

    def __call__(self, eta: float) -> float:
        return robust_dimension(eta, self.k, self.R, self.alpha, self.rho, self.dims)


# --------------------------------------------------------------------------
# Nets
# --------------------------------------------------------------------------


@dataclass
class CandidateNet:
    """Finite candidate set with Hellinger radius ``eta_bar``, dimension bound and weight."""

    candidates: Sequence
    eta_bar: float
    dim_bound: Any
    weight: float
    label: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("a net needs at least one candidate")
        if not self.eta_bar > 0:
            raise ValueError("eta_bar must be positive")
        if self.weight < 0:
            raise ValueError("weights are non-negative")

    def dim_at(self, eta: float | None = None) -> float:
        d = self.dim_bound
        return float(d(self.eta_bar if eta is None else eta)) if callable(d) else float(d)

    def __len__(self) -> int:
        return len(self.candidates)

    def with_weight(self, weight: float) -> "CandidateNet":
        return CandidateNet(self.candidates, self.eta_bar, self.dim_bound, weight, self.label,
                            dict(self.meta))

    def to_dict(self) -> dict:
        return {"label": self.label, "eta_bar": self.eta_bar, "weight": self.weight,
                "dim_bound": self.dim_at(),
                "candidates": [[str(p) for p in c.descriptor()] for c in self.candidates]}


def weight_sum(nets: Iterable[CandidateNet]) -> float:
    """``sum exp(-weight)`` over the nets."""
    return float(sum(math.exp(-net.weight) for net in nets))


def lattice_axis(lo: float, hi: float, spacing: float) -> np.ndarray:
    """Equally spaced points from ``lo`` to ``hi`` with gaps at most ``spacing``."""
    if hi < lo or spacing <= 0:
        raise ValueError("bad lattice axis")
    if hi == lo:
        return np.array([lo])
    count = int(math.ceil((hi - lo) / spacing - 1e-12)) + 1
    return np.linspace(lo, hi, count)


# Piecewise-polynomial spaces ------------------------------------------------


class PiecewisePolySpace:
    """Polynomials of a given degree on ``2^depth`` dyadic cells, with an orthonormal basis.

    On the time axis the basis is made of scaled Legendre polynomials (orthonormal
    for Lebesgue measure).  On the covariate axis (first coordinate of ``x``)
    the basis is orthonormalised for the empirical measure of the design;
    cells without design points are dropped.
    """

    def __init__(self, depth: int, degree: int, axis: str, T: TimeDomain | None = None,
                 X: CovariateSet | None = None, lo: float = 0.0, hi: float = 1.0):
        if depth < 0 or not 0 <= degree <= 3:
            raise ValueError("depth >= 0 and degree in 0..3 are required")
        if axis not in ("time", "cov"):
            raise ValueError("axis is 'time' or 'cov'")
        self.depth, self.degree, self.axis = depth, degree, axis
        if axis == "time":
            if T is None:
                raise ValueError("time spaces need a TimeDomain")
            lo, hi = T.t_min, T.t_max
        self.T, self.X = T, X
        self.edges = np.linspace(lo, hi, 2 ** depth + 1)
        if axis == "cov":
            if X is None:
                raise ValueError("covariate spaces need a CovariateSet")
            self._cov_basis()
        else:
            self.dim = 2 ** depth * (degree + 1)

    def _cell(self, v: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self.edges, v, side="right") - 1, 0, self.edges.size - 2)

    def _cov_basis(self) -> None:
        x = self.X.points[:, 0]
        n = x.size
        cells = self._cell(x)
        cols = []
        for c in range(self.edges.size - 1):
            mask = cells == c
            if not mask.any():
                continue
            V = np.zeros((n, self.degree + 1))
            for p in range(self.degree + 1):
                V[mask, p] = x[mask] ** p
            V = V[:, np.linalg.norm(V, axis=0) > 0]
            # orthonormal for <f, g> = n^-1 sum f(x_i) g(x_i)
            q, r = np.linalg.qr(V[mask] / math.sqrt(n))
            keep = np.abs(np.diag(r)) > 1e-12 * max(1.0, np.abs(np.diag(r)).max())
            B = np.zeros((n, int(keep.sum())))
            B[mask] = q[:, keep] * math.sqrt(n)
            cols.append(B)
        self.basis_values = np.hstack(cols)
        self.dim = self.basis_values.shape[1]

    def basis(self, v: np.ndarray) -> np.ndarray:
        """Time basis at points ``v``: array of shape ``v.shape + (dim,)``."""
        if self.axis != "time":
            raise ValueError("use basis_values for covariate spaces")
        v = np.asarray(v, dtype=float)
        c = self._cell(v)
        h = self.edges[1] - self.edges[0]
        s = 2.0 * (v - self.edges[c]) / h - 1.0
        out = np.zeros(v.shape + (self.dim,))
        inside = (v >= self.edges[0]) & (v <= self.edges[-1])
        for p in range(self.degree + 1):
            coef = np.zeros(p + 1)
            coef[p] = 1.0
            val = np.polynomial.legendre.legval(s, coef) * math.sqrt((2 * p + 1) / h)
            j = c * (self.degree + 1) + p
            np.put_along_axis(out, j[..., None], np.where(inside, val, 0.0)[..., None], axis=-1)
        return out

    def descriptor(self) -> tuple:
        extra = _hash_arrays(self.basis_values) if self.axis == "cov" else ""
        return ("pp", self.axis, self.depth, self.degree, repr(float(self.edges[0])),
                repr(float(self.edges[-1])), extra)

    @property
    def is_histogram(self) -> bool:
        return self.degree == 0


class SpaceFactor:
    """Element ``sum_j c_j phi_j`` of a :class:`PiecewisePolySpace`, usable as a product factor."""

    def __init__(self, space: PiecewisePolySpace, coeffs: Sequence[float]):
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (space.dim,):
            raise ValueError("coefficient vector has the wrong length")
        c.setflags(write=False)
        self.space, self.coeffs = space, c
        self.index_dependent = False

    def __call__(self, t):
        return self.space.basis(np.asarray(t, dtype=float)) @ self.coeffs

    def values_at(self, idx, X):
        if self.space.axis != "cov" or X is not self.space.X and X != self.space.X:
            raise DomainError("covariate factor built for another design")
        return (self.space.basis_values @ self.coeffs)[np.asarray(idx)]

    def sq_integral(self, T: TimeDomain) -> float:
        return float(self.coeffs @ self.coeffs)

    def sup_sq(self, T: TimeDomain) -> float:
        if self.space.degree == 0:
            h = self.space.edges[1] - self.space.edges[0]
            return float(np.max(self.coeffs ** 2) / h)
        Q = QuadratureRule.simpson(T, 2049)
        return float(np.max(self(Q.nodes) ** 2))

    def scaled(self, c: float) -> "SpaceFactor":
        return SpaceFactor(self.space, self.coeffs * c)

    def descriptor(self) -> tuple:
        return ("space", self.space.descriptor(), tuple(repr(float(v)) for v in self.coeffs))

    def to_dict(self) -> dict:
        raise ValueError("space factors are rebuilt from their net description")


class LinearSqrt(IntensitySurface):
    """Intensity ``max(g, 0)^2`` for ``g`` in a piecewise-polynomial space (time or covariate axis)."""

    tag = "linear_sqrt"

    def __init__(self, space: PiecewisePolySpace, coeffs: Sequence[float]):
        self.factor = SpaceFactor(space, coeffs)
        self.space = space

    @property
    def coeffs(self) -> np.ndarray:
        return self.factor.coeffs

    def sqrt(self, t, idx, X):
        t = np.asarray(t, dtype=float)
        if self.space.axis == "time":
            g = self.factor(t)
            return np.maximum(np.broadcast_to(g, np.broadcast(t, np.asarray(idx)).shape), 0.0)
        g = self.factor.values_at(idx, X)
        return np.maximum(np.broadcast_to(g, np.broadcast(t, np.asarray(idx)).shape), 0.0)

    def evaluate(self, t, idx, X):
        return self.sqrt(t, idx, X) ** 2

    def sup_bound(self, i, X, T):
        if self.space.axis == "cov":
            return float(max(self.factor.values_at(np.asarray(i), X), 0.0) ** 2)
        return self.factor.sup_sq(T)

    def descriptor(self):
        return (self.tag,) + self.factor.descriptor()[1:]

    def to_dict(self):
        raise ValueError("linear candidates are rebuilt from their net description")


def build_linear_net(dim: int, box: tuple[float, float], eta: float,
                     domain: TimeDomain | CovariateSet, degree: int = 0, cap: int = 10 ** 6,
                     label: str | None = None) -> CandidateNet:
    """Lattice net of the coefficient box of a dyadic piecewise-polynomial space.

    ``dim = 2^depth (degree + 1)``.  Coefficients are in an orthonormal basis,
    so the coefficient lattice with spacing ``eta * min(1, 2/sqrt(dim))``
    covers the box within ``eta`` in L2.
    """
    if dim < 1 or eta <= 0:
        raise ValueError("dim >= 1 and eta > 0 are required")
    cells = dim // (degree + 1)
    depth = int(round(math.log2(cells))) if cells > 0 else -1
    if cells * (degree + 1) != dim or 2 ** depth != cells:
        raise ValueError("dim must be 2^depth * (degree + 1)")
    if isinstance(domain, TimeDomain):
        space = PiecewisePolySpace(depth, degree, "time", T=domain)
    else:
        space = PiecewisePolySpace(depth, degree, "cov", X=domain)
    spacing = eta * min(1.0, 2.0 / math.sqrt(space.dim))
    axis = lattice_axis(box[0], box[1], spacing)
    total = axis.size ** space.dim
    if total > cap:
        raise CapExceeded(f"linear net would hold {total} points (cap {cap})")
    return CandidateNet(LatticeCandidates(space, axis), eta / SQRT2, float(space.dim), 0.0,
                        label or f"linear[dim={space.dim},eta={eta:.4g}]",
                        {"kind": "linear", "space": space, "box": tuple(box), "eta": eta})


class LatticeCandidates(cabc.Sequence):
    """The lattice ``axis^dim`` of coefficient vectors in ``space``, as lazily built candidates.

    Order is lexicographic in the coefficients (last coordinate fastest).
    """

    def __init__(self, space: PiecewisePolySpace, axis: np.ndarray):
        self.space = space
        self.axis = np.asarray(axis, dtype=float)
        self.shape = (self.axis.size,) * space.dim
        self._len = int(self.axis.size) ** space.dim

    def __len__(self) -> int:
        return self._len

    def __getitem__(self, j):
        if isinstance(j, slice):
            return [self[k] for k in range(*j.indices(self._len))]
        j = int(j)
        if j < 0:
            j += self._len
        if not 0 <= j < self._len:
            raise IndexError(j)
        return LinearSqrt(self.space, self.coefficients(j, j + 1)[0])

    def coefficients(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        stop = self._len if stop is None else min(stop, self._len)
        idx = np.unravel_index(np.arange(start, stop), self.shape)
        return self.axis[np.stack(idx, axis=1)] if idx else np.zeros((stop - start, 0))

    def basis_at(self, t: np.ndarray, idx: np.ndarray) -> np.ndarray:
        """Basis values at the points ``(t, idx)``, shape ``(len(t), dim)``."""
        if self.space.axis == "time":
            return self.space.basis(np.asarray(t, dtype=float))
        return self.space.basis_values[np.asarray(idx)]

    def sqrt_block(self, B: np.ndarray, start: int, stop: int) -> np.ndarray:
        """Square-root values of candidates ``start..stop`` at points with basis values ``B``."""
        return np.maximum(self.coefficients(start, stop) @ B.T, 0.0)

    @property
    def index_dependent(self) -> bool:
        return self.space.axis == "cov"

    def __iter__(self):
        for j in range(self._len):
            yield self[j]


# Sphere nets and products ---------------------------------------------------


def orthant_sphere_net(dim: int, delta: float, cap: int = 10 ** 6) -> np.ndarray:
    """Points of the unit sphere of ``R^dim`` in the non-negative orthant, within ``delta`` of every
    unit vector with non-negative coordinates."""
    if dim == 1:
        return np.ones((1, 1))
    h = delta / math.sqrt(dim)
    axis = lattice_axis(0.0, 1.0, h)
    if axis.size ** dim > 50 * cap:
        raise CapExceeded("sphere net lattice too large")
    grid = np.array(np.meshgrid(*([axis] * dim), indexing="ij")).reshape(dim, -1).T
    norms = np.linalg.norm(grid, axis=1)
    keep = np.abs(norms - 1.0) <= 0.5 * h * math.sqrt(dim) + 1e-12
    pts = grid[keep] / norms[keep, None]
    pts = np.unique(np.round(pts, 12), axis=0)
    if pts.shape[0] > cap:
        raise CapExceeded("sphere net too large")
    return pts


def build_product_net(V1: PiecewisePolySpace, V2: PiecewisePolySpace | None, eta: float,
                      kappa_max: float | None, cap: int = 10 ** 5,
                      label: str | None = None) -> CandidateNet:
    """Scaled products ``kappa f g`` with unit factors.

    Scales run over ``k eta / sqrt(2)`` (``k = 1, 2, ...`` up to ``kappa_max``); at
    scale index ``k`` both factors come from sphere nets at resolution
    ``1 / (sqrt(2) k)``.  Factors are restricted to non-negative coefficient
    vectors, which loses nothing for non-negative targets when both spaces are
    histogram spaces.  ``V2=None`` means the constant covariate factor.
    """
    if kappa_max is None:
        raise ValueError("kappa_max must be set for the unbounded scale")
    if eta <= 0:
        raise ValueError("eta must be positive")
    K = max(1, int(math.ceil(SQRT2 * kappa_max / eta)))
    d1 = V1.dim
    d2 = 1 if V2 is None else V2.dim
    cands: list = []
    coords: list = []
    cache: dict = {}
    for k in range(1, K + 1):
        delta = 1.0 / (SQRT2 * k)
        key = delta
        if key not in cache:
            cache[key] = (orthant_sphere_net(d1, delta, cap), orthant_sphere_net(d2, delta, cap))
        S1, S2 = cache[key]
        if len(cands) + S1.shape[0] * S2.shape[0] > cap:
            raise CapExceeded(f"product net exceeds cap {cap}")
        kappa = k * eta / SQRT2
        for f in S1:
            tf = SpaceFactor(V1, f)
            for g in S2:
                cf = CovConstant(1.0) if V2 is None else SpaceFactor(V2, g)
                cands.append(Product(kappa, tf, cf))
                coords.append((kappa, f, g))
    dim_bound = 1.4 * (d1 + (V2.dim if V2 is not None else 1) + 1)
    return CandidateNet(cands, eta / SQRT2, dim_bound, 0.0,
                        label or f"product[{d1}x{d2},eta={eta:.4g}]",
                        {"kind": "product", "V1": V1, "V2": V2, "coords": coords,
                         "kappa_max": kappa_max, "eta": eta})


# Cox-type parametric products -----------------------------------------------


def sparse_weight(k2: int, support_size: int) -> float:
    """``1 + |m| + log C(k2, |m|)``."""
    if not 0 <= support_size <= k2:
        raise ValueError("support size out of range")
    return 1.0 + support_size + math.log(math.comb(k2, support_size))


def truncation_weight(r: int, R: int, varrho: int) -> float:
    """``log(2 R^2) + log(2 r^2) + log(2 varrho^2)`` for integer truncation levels."""
    return math.log(2 * R * R) + math.log(2 * r * r) + math.log(2 * varrho * varrho)


def cox_surface(a: float, b: float, theta: Sequence[float], profile: LipschitzProfile) -> ProductExp:
    """Intensity ``(a u_b(t) exp(<theta, x>))^2`` as a :class:`ProductExp`."""
    th = 2.0 * np.asarray(theta, dtype=float)
    if profile.family == "power":
        return ProductExp(a * a, 2.0 * b, th, "power")
    return ProductExp(a * a, 2.0 * b, th, "exp", 2 * profile.k)


def build_cox_net(profile: LipschitzProfile, b_range: tuple[float, float], support: Sequence[int],
                  rho_theta: float, eta: float, X: CovariateSet, T: TimeDomain,
                  kappa_max: float, theta_spacing: str = "lipschitz", cap: int = 10 ** 5,
                  label: str | None = None, extra_weight: float = 0.0) -> CandidateNet:
    """Net of ``a u_b v_theta`` with ``b`` in ``b_range`` and ``theta`` supported on ``support``.

    The candidates follow the scaled-product construction: at scale index
    ``k`` the normalised time factor and covariate factor are each resolved to
    ``1/(sqrt(2) k)``.  The ``b`` grid uses the upper Lipschitz bracket at the
    left end of ``b_range``.  The ``theta`` lattice uses either the
    bi-Lipschitz constant ``e^(3 rho)`` (``theta_spacing="lipschitz"``) or the
    Euclidean Lipschitz constant 1 of ``theta -> v_theta / |v_theta|`` for
    designs in the unit ball (``"euclidean"``).
    """
    r, R = b_range
    if not (profile.b0 < r <= R):
        raise ValueError("b_range must be a non-empty subinterval of the profile interval")
    if rho_theta <= 0 or eta <= 0:
        raise ValueError("rho_theta and eta must be positive")
    support = tuple(sorted(int(j) for j in support))
    k2 = X.dim
    if any(not 0 <= j < k2 for j in support):
        raise ValueError("support indices out of range")
    if theta_spacing not in ("lipschitz", "euclidean"):
        raise ValueError("theta_spacing is 'lipschitz' or 'euclidean'")
    lip_theta = math.exp(3 * rho_theta) if theta_spacing == "lipschitz" else 1.0
    m = len(support)
    rho_up = profile.rho_upper(r)
    K = max(1, int(math.ceil(SQRT2 * kappa_max / eta)))
    cands, coords = [], []
    xs = X.points
    for k in range(1, K + 1):
        delta = 1.0 / (SQRT2 * k)
        b_grid = lattice_axis(r, R, 2.0 * delta / rho_up)
        if m:
            step = 2.0 * delta / (lip_theta * math.sqrt(m))
            ax = lattice_axis(-rho_theta, rho_theta, step)
            lat = np.array(list(itertools.product(ax, repeat=m)))
            lat = lat[np.linalg.norm(lat, axis=1) <= rho_theta + 0.5 * step * math.sqrt(m)]
        else:
            lat = np.zeros((1, 0))
        if len(cands) + b_grid.size * lat.shape[0] > cap:
            raise CapExceeded(f"Cox net exceeds cap {cap}")
        kappa = k * eta / SQRT2
        for th_s in lat:
            theta = np.zeros(k2)
            theta[list(support)] = th_s
            v_norm = math.sqrt(float(np.mean(np.exp(2.0 * xs @ theta))))
            for b in b_grid:
                u_norm = math.sqrt(profile.time_factor_norm_sq(b, T))
                a = kappa / (u_norm * v_norm)
                cands.append(cox_surface(a, b, theta, profile))
                coords.append((kappa, b, theta))
    weight = sparse_weight(k2, m) + extra_weight
    dim_bound = 1.4 * (1 + max(m, 0) + 1)
    return CandidateNet(cands, eta / SQRT2, dim_bound, weight,
                        label or f"cox[{profile.name},m={support},b={r:g}..{R:g},rho={rho_theta:g},"
                                 f"eta={eta:.4g}]",
                        {"kind": "cox", "profile": profile, "support": support, "b_range": (r, R),
                         "rho_theta": rho_theta, "coords": coords, "kappa_max": kappa_max,
                         "eta": eta, "X": X, "T": T})


# Change points --------------------------------------------------------------


@dataclass(frozen=True)
class Partition:
    """Partition of ``{0, ..., n-1}`` into consecutive intervals, given by their start indices."""

    starts: tuple
    n: int

    def __post_init__(self):
        s = tuple(int(v) for v in self.starts)
        if not s or s[0] != 0 or any(b <= a for a, b in zip(s, s[1:])) or s[-1] >= self.n:
            raise ValueError("starts must begin at 0, increase strictly and stay below n")
        object.__setattr__(self, "starts", s)

    @property
    def size(self) -> int:
        return len(self.starts)

    def intervals(self) -> list[tuple[int, int]]:
        ends = self.starts[1:] + (self.n,)
        return list(zip(self.starts, ends))


def enumerate_partitions(n: int, max_segments: int) -> list[Partition]:
    """All partitions of ``{0..n-1}`` into at most ``max_segments`` intervals."""
    if not 1 <= max_segments <= n:
        raise ValueError("need 1 <= max_segments <= n")
    out = []
    for size in range(1, max_segments + 1):
        for cuts in itertools.combinations(range(1, n), size - 1):
            out.append(Partition((0,) + cuts, n))
    return out


def changepoint_weight(n: int, size: int) -> float:
    """``|P| + log C(n-1, |P|-1)``."""
    return size + math.log(math.comb(n - 1, size - 1))


def duane_param_grid(eta: float, r1: float, r2: float, theta2_max: float,
                     theta1_min: float = 0.0) -> np.ndarray:
    """Grid on ``[theta1_min, r1] x [-1/2 + 1/r2, theta2_max]`` covering Duane members within ``eta``.

    Spacings follow the Lipschitz constants ``r2^(1/2)`` and ``sqrt(2) r1 r2^(3/2)``.
    """
    R1, R2 = math.sqrt(r2), SQRT2 * r1 * r2 ** 1.5
    g1 = lattice_axis(theta1_min, r1, eta / R1)
    g2 = lattice_axis(-0.5 + 1.0 / r2, theta2_max, eta / R2)
    return np.array(list(itertools.product(g1, g2)))


def build_changepoint_collection(family: SqrtFamily, param_grid: Sequence[Sequence[float]],
                                 max_segments: int, n: int, eta_bar: float | Callable[[int], float],
                                 dim_bound: Any = 1.0, cap: int = 10 ** 5,
                                 materialize: bool = True) -> list[CandidateNet]:
    """One net per partition with at most ``max_segments`` intervals.

    Candidates assign a grid parameter to each interval.  ``eta_bar`` may be a
    function of the number of intervals.  With ``materialize=False`` the nets
    carry their description only (used by the change-point fast path).
    """
    grid = np.asarray(param_grid, dtype=float)
    if grid.ndim != 2 or grid.shape[1] != 2:
        raise ValueError("parameter grid must list (theta1, theta2) pairs")
    if max_segments > n:
        raise ValueError("max_segments cannot exceed n")
    parts = enumerate_partitions(n, max_segments)
    G = grid.shape[0]
    total = sum(G ** p.size for p in parts)
    if total > cap:
        raise CapExceeded(f"change-point collection would hold {total} candidates (cap {cap})")
    nets = []
    for p in parts:
        eb = eta_bar(p.size) if callable(eta_bar) else float(eta_bar)
        dim = dim_bound(p.size) if callable(dim_bound) and not isinstance(
            dim_bound, (ConstantDimension, LogDimension, RobustDimension)) else dim_bound
        if materialize:
            cands = [PiecewiseParam(p.starts, [grid[j] for j in combo], n, family)
                     for combo in itertools.product(range(G), repeat=p.size)]
        else:
            cands = [None]
        nets.append(CandidateNet(cands, eb, dim, changepoint_weight(n, p.size),
                                 f"changepoint[{','.join(map(str, p.starts))}]",
                                 {"kind": "changepoint", "partition": p, "grid": grid,
                                  "family": family}))
    return nets


# Approximation --------------------------------------------------------------


def holder_approx_error(f: Callable[..., np.ndarray], depth: int, degree: int, k: int = 1,
                        points_per_cell: int = 12) -> float:
    """L2 distance on ``[0,1]^k`` from ``f`` to its projection on dyadic piecewise polynomials.

    The projection and the error integral use tensor Gauss-Legendre rules on
    every cell, which is exact for polynomial ``f`` of degree at most ``degree``.
    """
    if k not in (1, 2):
        raise ValueError("only k in {1, 2}")
    if not 0 <= degree <= 3 or depth < 0:
        raise ValueError("degree in 0..3 and depth >= 0")
    g, gw = np.polynomial.legendre.leggauss(points_per_cell)
    cells = 2 ** depth
    h = 1.0 / cells
    total = 0.0
    if k == 1:
        for c in range(cells):
            t = c * h + 0.5 * h * (g + 1)
            w = 0.5 * h * gw
            y = np.asarray(f(t), dtype=float)
            B = np.polynomial.legendre.legvander(g, degree)
            coef = np.linalg.lstsq(B * np.sqrt(w)[:, None], y * np.sqrt(w), rcond=None)[0]
            r = y - B @ coef
            total += float(np.sum(w * r * r))
        return math.sqrt(total)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    wxy = np.outer(gw, gw).reshape(-1)
    B1x = np.polynomial.legendre.legvander(gx.reshape(-1), degree)
    B1y = np.polynomial.legendre.legvander(gy.reshape(-1), degree)
    # total degree <= degree
    cols = [B1x[:, i] * B1y[:, j] for i in range(degree + 1) for j in range(degree + 1 - i)]
    B = np.stack(cols, axis=1)
    for cx in range(cells):
        for cy in range(cells):
            x = cx * h + 0.5 * h * (gx.reshape(-1) + 1)
            y_ = cy * h + 0.5 * h * (gy.reshape(-1) + 1)
            w = 0.25 * h * h * wxy
            y = np.asarray(f(x, y_), dtype=float)
            coef = np.linalg.lstsq(B * np.sqrt(w)[:, None], y * np.sqrt(w), rcond=None)[0]
            r = y - B @ coef
            total += float(np.sum(w * r * r))
    return math.sqrt(total)


# Certification --------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    bound: float
    detail: str = ""


def net_sq_distances(net: CandidateNet, member: Any, X: CovariateSet | None = None,
                     T: TimeDomain | None = None) -> np.ndarray:
    """Squared ``d_2`` from ``member`` (a description in the net's coordinates) to every candidate."""
    kind = net.meta.get("kind")
    if kind == "linear":
        c = np.asarray(member, dtype=float)
        d = net.candidates.coefficients() - c[None, :]
        return np.sum(d * d, axis=1)
    if kind == "product":
        kappa, f, g = member
        out = np.empty(len(net.meta["coords"]))
        for j, (k2, f2, g2) in enumerate(net.meta["coords"]):
            dt2 = float(np.sum((f - f2) ** 2))
            dx2 = float(np.sum((g - g2) ** 2))
            out[j] = (kappa - k2) ** 2 + kappa * k2 * (dt2 + dx2 - 0.5 * dt2 * dx2)
        return out
    if kind == "cox":
        X, T = net.meta["X"], net.meta["T"]
        prof = net.meta["profile"]
        kappa, b, theta = member
        u_n = math.sqrt(prof.time_factor_norm_sq(b, T))
        v_n = math.sqrt(float(np.mean(np.exp(2.0 * X.points @ np.asarray(theta)))))
        target = cox_surface(kappa / (u_n * v_n), b, theta, prof)
        return np.array([2.0 * hellinger_sq(target, c, X, T) for c in net.candidates])
    if kind == "changepoint":
        if X is None or T is None:
            raise ValueError("change-point distances need X and T")
        fam = net.meta["family"]
        if fam.name == "duane" and T.t_min == 0.0 and T.t_max == 1.0 and not T.point_mass:
            return _changepoint_sq_distances(net, member)
        return np.array([2.0 * hellinger_sq(member, c, X, T) for c in net.candidates])
    raise ValueError(f"no distance available for net kind {kind!r}")


def _changepoint_sq_distances(net: CandidateNet, member: PiecewiseParam) -> np.ndarray:
    """Closed-form squared distances for Duane candidates on ``(0, 1]``."""
    part, grid = net.meta["partition"], net.meta["grid"]
    n = part.n
    seg_m = member.segment_of(np.arange(n))
    a, b = grid[:, 0], grid[:, 1]
    G = grid.shape[0]
    # per process: distance from the member's parameter to every grid parameter
    per = np.empty((n, G))
    for i in range(n):
        c, d = member.params[seg_m[i]]
        per[i] = c * c / (2 * d + 1) - 2 * c * a / (d + b + 1) + a * a / (2 * b + 1)
    out = np.zeros([G] * part.size)
    for j, (lo, hi) in enumerate(part.intervals()):
        shape = [1] * part.size
        shape[j] = G
        out = out + per[lo:hi].sum(axis=0).reshape(shape)
    return out.reshape(-1) / n


def check_covering(net: CandidateNet, members: Sequence[Any], X: CovariateSet | None = None,
                   T: TimeDomain | None = None, eta_bar: float | None = None) -> CheckResult:
    """Every member lies within ``eta_bar`` (Hellinger) of the net."""
    radius = net.eta_bar if eta_bar is None else eta_bar
    worst = 0.0
    for mbr in members:
        d2 = float(np.min(net_sq_distances(net, mbr, X, T)))
        worst = max(worst, math.sqrt(max(d2, 0.0) / 2.0))
    return CheckResult(f"covering:{net.label}", worst <= radius * (1 + 1e-9), worst, radius,
                       f"{len(members)} members")


def check_cardinality(net: CandidateNet, centers: Sequence[Any], x: float = 2.0,
                      X: CovariateSet | None = None, T: TimeDomain | None = None) -> CheckResult:
    """``|net cap B(phi, x eta_bar)| <= exp(D x^2)`` at every center."""
    bound = math.exp(net.dim_at() * x * x)
    radius_sq = 2.0 * (x * net.eta_bar) ** 2  # squared d_2 radius
    worst = 0
    for c in centers:
        cnt = int(np.sum(net_sq_distances(net, c, X, T) <= radius_sq * (1 + 1e-12)))
        worst = max(worst, cnt)
    return CheckResult(f"cardinality:{net.label}", worst <= bound, float(worst), bound,
                       f"{len(centers)} centers, x={x}")


def random_unit_orthant(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = np.abs(rng.standard_normal(dim))
    return v / np.linalg.norm(v)


def sample_members(net: CandidateNet, rng: np.random.Generator, count: int) -> list:
    """Random members of the class a net is meant to cover, in the net's coordinates."""
    kind = net.meta.get("kind")
    if kind == "linear":
        lo, hi = net.meta["box"]
        d = net.meta["space"].dim
        return [rng.uniform(lo, hi, d) for _ in range(count)]
    if kind == "product":
        d1 = net.meta["V1"].dim
        V2 = net.meta["V2"]
        d2 = 1 if V2 is None else V2.dim
        kmax = net.meta["kappa_max"]
        return [(rng.uniform(0, kmax), random_unit_orthant(rng, d1), random_unit_orthant(rng, d2))
                for _ in range(count)]
    if kind == "cox":
        r, R = net.meta["b_range"]
        sup = net.meta["support"]
        k2 = net.meta["X"].dim
        rho = net.meta["rho_theta"]
        out = []
        for _ in range(count):
            theta = np.zeros(k2)
            if sup:
                v = rng.standard_normal(len(sup))
                v *= rho * rng.uniform() ** (1 / len(sup)) / np.linalg.norm(v)
                theta[list(sup)] = v
            out.append((rng.uniform(0, net.meta["kappa_max"]), rng.uniform(r, R), theta))
        return out
    raise ValueError(f"no sampler for net kind {kind!r}")


def net_to_json_dict(nets: Sequence[CandidateNet]) -> list[dict]:
    return [net.to_dict() for net in nets]


# Parametric square-root families: closed forms and Lipschitz constants ------


def duane_sq_distance(th: Sequence[float], th2: Sequence[float]) -> float:
    """``int_0^1 (a t^b - a' t^b')^2 dt`` for ``b, b' > -1/2``."""
    (a, b), (c, d) = th, th2
    if b <= -0.5 or d <= -0.5:
        raise DomainError("exponents must exceed -1/2")
    return a * a / (2 * b + 1) - 2 * a * c / (b + d + 1) + c * c / (2 * d + 1)


def expfamily_sq_distance(th: Sequence[float], th2: Sequence[float], k: int) -> float:
    """``int_0^inf t^k (a e^(-b t) - a' e^(-b' t))^2 dt`` for ``b, b' > 0``."""
    (a, b), (c, d) = th, th2
    if b <= 0 or d <= 0:
        raise DomainError("rates must be positive")
    f = math.factorial(k)
    return f * (a * a / (2 * b) ** (k + 1) - 2 * a * c / (b + d) ** (k + 1)
                + c * c / (2 * d) ** (k + 1))


def duane_lipschitz(r1: float, r2: float) -> tuple[float, float]:
    """Constants ``(R1, R2)`` with ``d_t(f_th, f_th') <= R1 |d th1| + R2 |d th2|`` on
    ``[-r1, r1] x [-1/2 + 1/r2, inf)``."""
    if r1 <= 0 or r2 <= 0:
        raise ValueError("r1, r2 must be positive")
    return math.sqrt(r2), SQRT2 * r1 * r2 ** 1.5


def expfamily_lipschitz(k: int, r1: float, r2: float) -> tuple[float, float]:
    """Same for ``th1 t^(k/2) e^(-th2 t)`` on ``[-r1, r1] x [1/r2, inf)``, ``k in {0, 1}``."""
    if r1 <= 0 or r2 <= 0:
        raise ValueError("r1, r2 must be positive")
    if k == 0:
        return math.sqrt(r2 / 2.0), r1 * r2 ** 1.5 / 2.0
    if k == 1:
        return r2 / 2.0, math.sqrt(3.0 / 8.0) * r1 * r2 * r2
    raise ValueError("only k in {0, 1}")


def changepoint_dimension(family: SqrtFamily, r1: float, r2: float,
                          size: int) -> RobustDimension:
    """Dimension function of a ``size``-interval model with parameters in the Lipschitz box."""
    R = duane_lipschitz(r1, r2) if family.name == "duane" else expfamily_lipschitz(
        family.k, r1, r2)
    return RobustDimension(2, tuple(R), (1.0, 1.0), (r1, r2), (size, size))
