"""Observation model: n Poisson processes on a time domain, indexed by covariates.

Intensities are represented by small immutable classes.  Every surface exposes
``evaluate(t, idx, X)`` and ``sqrt(t, idx, X)`` which broadcast over the time
array ``t`` and the process-index array ``idx``; covariates are looked up
through the :class:`CovariateSet`.

Random numbers come from numpy's Philox counter-based generator.  The stream of
process ``i`` under seed ``s`` is keyed by ``SeedSequence([s, i])``, so the
realisation of one process never depends on how many others are simulated or
on the order in which they are drawn.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import special


class DomainError(ValueError):
    """Raised for intensities that cannot be integrated or bounded on a domain."""


# --------------------------------------------------------------------------
# Domains and covariates
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeDomain:
    """Interval ``[t_min, t_max]`` carrying Lebesgue measure, or a single atom.

    With ``point_mass=True`` the domain is ``{t_min}`` with unit mass; integrals
    become point evaluations and a process reduces to one Poisson count.
    """

    t_min: float = 0.0
    t_max: float = 1.0
    truncated: bool = False
    point_mass: bool = False

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t_min) and math.isfinite(self.t_max)):
            raise DomainError("time domain bounds must be finite")
        if self.point_mass:
            if self.t_max != self.t_min:
                raise DomainError("a point-mass domain has t_min == t_max")
        elif not self.t_min < self.t_max:
            raise DomainError("t_min must be smaller than t_max")

    @classmethod
    def point(cls, at: float = 0.0) -> "TimeDomain":
        return cls(at, at, point_mass=True)

    @classmethod
    def truncated_decay(cls, rate: float, k: int = 0, scale: float = 1.0,
                        tol: float = 1e-10) -> "TimeDomain":
        """Clip ``[0, inf)`` so the tail mass of ``scale * t^(k/2) e^(-rate t)`` is below ``tol``."""
        if rate <= 0:
            raise DomainError("decay rate must be positive")
        p = k / 2.0 + 1.0
        total = scale * special.gamma(p) / rate ** p

        def tail(T: float) -> float:
            return total * special.gammaincc(p, rate * T)

        hi = 1.0 / rate
        while tail(hi) >= tol:
            hi *= 2.0
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if tail(mid) >= tol:
                lo = mid
            else:
                hi = mid
        return cls(0.0, hi, truncated=True)

    @property
    def length(self) -> float:
        return 1.0 if self.point_mass else self.t_max - self.t_min

    def contains(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return (t >= self.t_min) & (t <= self.t_max)

    def to_dict(self) -> dict:
        return {"t_min": self.t_min, "t_max": self.t_max,
                "truncated": self.truncated, "point_mass": self.point_mass}

    @classmethod
    def from_dict(cls, d: dict) -> "TimeDomain":
        return cls(float(d.get("t_min", 0.0)), float(d.get("t_max", 1.0)),
                   bool(d.get("truncated", False)), bool(d.get("point_mass", False)))


class CovariateSet:
    """The deterministic design points ``x_1, ..., x_n`` in ``R^k``."""

    __slots__ = ("_points", "_groups")

    def __init__(self, points: Any, require_unit_ball: bool = False):
        arr = np.array(points, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError("covariates must be a non-empty (n, k) array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("covariates must be finite")
        if require_unit_ball and np.any(np.linalg.norm(arr, axis=1) > 1 + 1e-12):
            raise ValueError("covariates must lie in the closed unit ball")
        arr.setflags(write=False)
        self._points = arr
        self._groups = None

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def n(self) -> int:
        return self._points.shape[0]

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    def distinct(self) -> tuple[np.ndarray, np.ndarray]:
        """Indices of one representative per distinct row, and the row -> group map."""
        if self._groups is None:
            _, first, inverse = np.unique(self._points, axis=0, return_index=True,
                                          return_inverse=True)
            self._groups = (first, inverse.reshape(-1))
        return self._groups

    def __eq__(self, other: object) -> bool:
        return isinstance(other, CovariateSet) and np.array_equal(self._points, other._points)

    def __hash__(self) -> int:
        return hash(self._points.tobytes())

    def to_list(self) -> list:
        return self._points.tolist()


# --------------------------------------------------------------------------
# Time weights shared by parametric families
# --------------------------------------------------------------------------


def _pow(t: np.ndarray, b) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.power(t, b)
    return np.where(np.asarray(b) == 0, 1.0, out)


def power_weight(t: np.ndarray, b: float) -> np.ndarray:
    """``t^b``."""
    return _pow(np.asarray(t, dtype=float), b)


def exp_weight(t: np.ndarray, b: float, k: int) -> np.ndarray:
    """``t^(k/2) e^(-b t)``."""
    t = np.asarray(t, dtype=float)
    return _pow(t, k / 2.0) * np.exp(-b * t)


def _power_integral(b: float, t0: float, t1: float) -> float:
    if b == -1.0:
        if t0 <= 0:
            raise DomainError("t^-1 is not integrable at 0")
        return math.log(t1 / t0)
    if b < -1.0 and t0 <= 0:
        raise DomainError(f"t^{b} is not integrable at 0")
    return (t1 ** (b + 1) - (t0 ** (b + 1) if t0 > 0 or b + 1 > 0 else 0.0)) / (b + 1)


def _exp_integral(b: float, k: float, t0: float, t1: float) -> float:
    """``int_{t0}^{t1} t^(k/2) e^(-b t) dt`` for ``b > 0`` (``k/2`` may be any real > -1)."""
    p = k / 2.0 + 1.0
    if b == 0:
        return _power_integral(k / 2.0, t0, t1)
    if b < 0:
        raise DomainError("exponential weights need a non-negative rate")
    scale = special.gamma(p) / b ** p
    return scale * (special.gammainc(p, b * t1) - special.gammainc(p, b * t0))


def _power_sup(b: float, T: TimeDomain) -> float:
    if b >= 0:
        return T.t_max ** b
    if T.t_min > 0:
        return T.t_min ** b
    return math.inf


def _exp_sup(b: float, k: int, T: TimeDomain) -> float:
    if k == 0:
        return math.exp(-b * T.t_min) if b >= 0 else math.exp(-b * T.t_max)
    peak = k / (2.0 * b) if b > 0 else T.t_max
    tc = min(max(peak, T.t_min), T.t_max)
    return float(exp_weight(np.array(tc), b, k))


# --------------------------------------------------------------------------
# Intensity surfaces
# --------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


class IntensitySurface:
    """Base class.  Subclasses implement ``evaluate`` and optionally ``sqrt``."""

    tag = "abstract"
    index_dependent = False  # True when the value depends on i beyond x_i

    def evaluate(self, t, idx, X: CovariateSet) -> np.ndarray:
        raise NotImplementedError

    def sqrt(self, t, idx, X: CovariateSet) -> np.ndarray:
        return np.sqrt(np.maximum(self.evaluate(t, idx, X), 0.0))

    def sup_bound(self, i: int, X: CovariateSet, T: TimeDomain) -> float:
        raise NotImplementedError

    def integral(self, i: int, X: CovariateSet, T: TimeDomain) -> float | None:
        """Closed-form ``int_T s(t, x_i) dt`` when available, else ``None``."""
        return None

    def inverse_cumulative(self, u: np.ndarray, i: int, X: CovariateSet,
                           T: TimeDomain) -> np.ndarray | None:
        """Map uniform draws to event times when the cumulative intensity inverts in closed form."""
        return None

    def descriptor(self) -> tuple:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __eq__(self, other: object) -> bool:
        return isinstance(other, IntensitySurface) and self.descriptor() == other.descriptor()

    def __hash__(self) -> int:
        return hash(self.descriptor())

    def __repr__(self) -> str:
        return f"{type(self).__name__}{self.descriptor()[1:]}"

    @property
    def ident(self) -> str:
        """Stable text id, used for tie-breaking and hashing."""
        return "|".join(str(p) for p in self.descriptor())


class Constant(IntensitySurface):
    tag = "constant"

    def __init__(self, lam: float):
        if lam < 0 or not math.isfinite(lam):
            raise DomainError("constant intensity must be finite and non-negative")
        self.lam = float(lam)

    def evaluate(self, t, idx, X):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(self.lam, np.broadcast(t, np.asarray(idx)).shape).astype(float)

    def sup_bound(self, i, X, T):
        return self.lam

    def integral(self, i, X, T):
        return self.lam * T.length

    def inverse_cumulative(self, u, i, X, T):
        if T.point_mass:
            return None
        return T.t_min + np.asarray(u, dtype=float) * (T.t_max - T.t_min)

    def descriptor(self):
        return (self.tag, _fmt(self.lam))

    def to_dict(self):
        return {"tag": self.tag, "lam": self.lam}


class PowerLaw(IntensitySurface):
    """``a t^b``."""

    tag = "power_law"

    def __init__(self, a: float, b: float):
        if a < 0:
            raise DomainError("scale must be non-negative")
        self.a, self.b = float(a), float(b)

    def evaluate(self, t, idx, X):
        t = np.asarray(t, dtype=float)
        shape = np.broadcast(t, np.asarray(idx)).shape
        return np.broadcast_to(self.a * power_weight(t, self.b), shape).copy()

    def sup_bound(self, i, X, T):
        if T.point_mass:
            return self.a * T.t_min ** self.b
        return self.a * _power_sup(self.b, T)

    def integral(self, i, X, T):
        if T.point_mass:
            return self.a * T.t_min ** self.b
        return self.a * _power_integral(self.b, T.t_min, T.t_max)

    def inverse_cumulative(self, u, i, X, T):
        if T.point_mass or self.b <= -1:
            return None
        p = self.b + 1.0
        lo, hi = T.t_min ** p, T.t_max ** p
        return (lo + u * (hi - lo)) ** (1.0 / p)

    def descriptor(self):
        return (self.tag, _fmt(self.a), _fmt(self.b))

    def to_dict(self):
        return {"tag": self.tag, "a": self.a, "b": self.b}


class ExpDecay(IntensitySurface):
    """``a t^(k/2) e^(-b t)``."""

    tag = "exp_decay"

    def __init__(self, a: float, b: float, k: int = 0):
        if a < 0:
            raise DomainError("scale must be non-negative")
        if int(k) != k or k < 0:
            raise DomainError("k must be a non-negative integer")
        self.a, self.b, self.k = float(a), float(b), int(k)

    def evaluate(self, t, idx, X):
        t = np.asarray(t, dtype=float)
        shape = np.broadcast(t, np.asarray(idx)).shape
        return np.broadcast_to(self.a * exp_weight(t, self.b, self.k), shape).copy()

    def sup_bound(self, i, X, T):
        if T.point_mass:
            return float(self.a * exp_weight(np.array(T.t_min), self.b, self.k))
        return self.a * _exp_sup(self.b, self.k, T)

    def integral(self, i, X, T):
        if T.point_mass:
            return float(self.a * exp_weight(np.array(T.t_min), self.b, self.k))
        return self.a * _exp_integral(self.b, self.k, T.t_min, T.t_max)

    def descriptor(self):
        return (self.tag, _fmt(self.a), _fmt(self.b), self.k)

    def to_dict(self):
        return {"tag": self.tag, "a": self.a, "b": self.b, "k": self.k}


class ProductExp(IntensitySurface):
    """``a w_b(t) exp(<theta, x>)`` with ``w_b`` a power (``t^b``) or exponential weight.

    ``family`` is ``"power"`` or ``"exp"``; the exponential weight is
    ``t^(k/2) e^(-b t)``.
    """

    tag = "product_exp"

    def __init__(self, a: float, b: float, theta: Sequence[float], family: str = "power",
                 k: int = 0):
        if a < 0:
            raise DomainError("scale must be non-negative")
        if family not in ("power", "exp"):
            raise DomainError(f"unknown time family {family!r}")
        self.a, self.b = float(a), float(b)
        self.theta = tuple(float(v) for v in np.atleast_1d(theta))
        self.family, self.k = family, int(k)

    def time_weight(self, t):
        if self.family == "power":
            return power_weight(t, self.b)
        return exp_weight(t, self.b, self.k)

    def cov_weight(self, idx, X):
        th = np.asarray(self.theta)
        if th.shape[0] != X.dim:
            raise DomainError("theta and covariates have different dimensions")
        return np.exp(X.points[np.asarray(idx)] @ th)

    def evaluate(self, t, idx, X):
        t = np.asarray(t, dtype=float)
        return self.a * self.time_weight(t) * self.cov_weight(idx, X)

    def _time_sup(self, T):
        if T.point_mass:
            return float(self.time_weight(np.array(T.t_min)))
        if self.family == "power":
            return _power_sup(self.b, T)
        return _exp_sup(self.b, self.k, T)

    def _time_integral(self, T):
        if T.point_mass:
            return float(self.time_weight(np.array(T.t_min)))
        if self.family == "power":
            return _power_integral(self.b, T.t_min, T.t_max)
        return _exp_integral(self.b, self.k, T.t_min, T.t_max)

    def sup_bound(self, i, X, T):
        return self.a * self._time_sup(T) * float(self.cov_weight(i, X))

    def integral(self, i, X, T):
        return self.a * self._time_integral(T) * float(self.cov_weight(i, X))

    def inverse_cumulative(self, u, i, X, T):
        if self.family != "power":
            return None
        return PowerLaw(1.0, self.b).inverse_cumulative(u, i, X, T)

    def descriptor(self):
        return (self.tag, _fmt(self.a), _fmt(self.b), tuple(_fmt(v) for v in self.theta),
                self.family, self.k)

    def to_dict(self):
        return {"tag": self.tag, "a": self.a, "b": self.b, "theta": list(self.theta),
                "family": self.family, "k": self.k}


# Square-root parametric families used by change-point models.


@dataclass(frozen=True)
class SqrtFamily:
    """``f_theta(t)``: ``duane`` is ``th1 t^th2``; ``exp`` is ``th1 t^(k/2) e^(-th2 t)``."""

    name: str = "duane"
    k: int = 0

    def __post_init__(self):
        if self.name not in ("duane", "exp"):
            raise DomainError(f"unknown square-root family {self.name!r}")

    def __call__(self, t, th1, th2):
        t = np.asarray(t, dtype=float)
        if self.name == "duane":
            return th1 * power_weight(t, th2)
        return th1 * exp_weight(t, th2, self.k)

    def sq_integral(self, th1: float, th2: float, T: TimeDomain) -> float:
        if T.point_mass:
            return float(self(np.array(T.t_min), th1, th2)) ** 2
        if self.name == "duane":
            return th1 ** 2 * _power_integral(2 * th2, T.t_min, T.t_max)
        return th1 ** 2 * _exp_integral(2 * th2, 2 * self.k, T.t_min, T.t_max)

    def sq_sup(self, th1: float, th2: float, T: TimeDomain) -> float:
        if T.point_mass:
            return float(self(np.array(T.t_min), th1, th2)) ** 2
        if self.name == "duane":
            return th1 ** 2 * _power_sup(2 * th2, T)
        return th1 ** 2 * _exp_sup(2 * th2, 2 * self.k, T)


class PiecewiseParam(IntensitySurface):
    """Intensity ``f_{theta_I}(t)^2`` for processes ``i`` in interval ``I``.

    ``starts`` lists the first (0-based) index of every interval; the first
    entry is 0.  ``params`` holds one ``(th1, th2)`` pair per interval.
    """

    tag = "piecewise_param"
    index_dependent = True

    def __init__(self, starts: Sequence[int], params: Sequence[Sequence[float]], n: int,
                 family: SqrtFamily = SqrtFamily()):
        starts = tuple(int(s) for s in starts)
        if not starts or starts[0] != 0 or any(b <= a for a, b in zip(starts, starts[1:])):
            raise DomainError("interval starts must begin at 0 and increase strictly")
        if starts[-1] >= n:
            raise DomainError("every interval must be non-empty")
        if len(params) != len(starts):
            raise DomainError("one parameter pair per interval is required")
        self.starts, self.n, self.family = starts, int(n), family
        self.params = tuple((float(p[0]), float(p[1])) for p in params)
        seg = np.zeros(self.n, dtype=int)
        for j, s in enumerate(starts[1:], start=1):
            seg[s:] = j
        self._seg = seg
        self._p = np.array(self.params)

    def segment_of(self, idx) -> np.ndarray:
        return self._seg[np.asarray(idx)]

    def sqrt(self, t, idx, X):
        seg = self.segment_of(idx)
        th = self._p[seg]
        return np.maximum(self.family(t, th[..., 0], th[..., 1]), 0.0)

    def evaluate(self, t, idx, X):
        return self.sqrt(t, idx, X) ** 2

    def sup_bound(self, i, X, T):
        th1, th2 = self.params[int(self._seg[i])]
        return self.family.sq_sup(th1, th2, T)

    def integral(self, i, X, T):
        th1, th2 = self.params[int(self._seg[i])]
        return self.family.sq_integral(th1, th2, T)

    def inverse_cumulative(self, u, i, X, T):
        th1, th2 = self.params[int(self._seg[i])]
        if self.family.name != "duane":
            return None
        return PowerLaw(1.0, 2 * th2).inverse_cumulative(u, i, X, T)

    def descriptor(self):
        return (self.tag, self.family.name, self.family.k, self.n, self.starts,
                tuple((_fmt(a), _fmt(b)) for a, b in self.params))

    def to_dict(self):
        return {"tag": self.tag, "family": self.family.name, "k": self.family.k, "n": self.n,
                "starts": list(self.starts), "params": [list(p) for p in self.params]}


class Grid(IntensitySurface):
    """Per-process values on time nodes, linearly interpolated (constant beyond the ends)."""

    tag = "grid"
    index_dependent = True

    def __init__(self, nodes: Sequence[float], values: Any):
        nodes = np.asarray(nodes, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if nodes.ndim != 1 or values.shape[1] != nodes.shape[0]:
            raise DomainError("values must have shape (n, len(nodes))")
        if np.any(np.diff(nodes) <= 0):
            raise DomainError("grid nodes must increase strictly")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DomainError("grid values must be finite and non-negative")
        nodes.setflags(write=False)
        values.setflags(write=False)
        self.nodes, self.values = nodes, values

    def evaluate(self, t, idx, X):
        t = np.asarray(t, dtype=float)
        idx = np.asarray(idx)
        t, idx = np.broadcast_arrays(t, idx)
        if self.nodes.shape[0] == 1:
            return self.values[idx, 0].astype(float)
        j = np.clip(np.searchsorted(self.nodes, t, side="right") - 1, 0, self.nodes.shape[0] - 2)
        t0, t1 = self.nodes[j], self.nodes[j + 1]
        w = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
        v = self.values
        return (1 - w) * v[idx, j] + w * v[idx, j + 1]

    def sup_bound(self, i, X, T):
        return float(self.values[i].max())

    def descriptor(self):
        import hashlib
        h = hashlib.blake2b(self.nodes.tobytes() + self.values.tobytes(), digest_size=12)
        return (self.tag, self.values.shape, h.hexdigest())

    def to_dict(self):
        return {"tag": self.tag, "nodes": self.nodes.tolist(), "values": self.values.tolist()}


class Product(IntensitySurface):
    """Intensity ``(kappa u(t) v(x))^2`` for a time factor ``u`` and covariate factor ``v``.

    The factors are objects from :mod:`poissel.geometry` (histograms, normalised
    parametric weights, covariate vectors); they need only be callable and
    describable.
    """

    tag = "product"

    def __init__(self, kappa: float, time_part: Any, cov_part: Any):
        if kappa < 0 or not math.isfinite(kappa):
            raise DomainError("kappa must be finite and non-negative")
        self.kappa, self.time_part, self.cov_part = float(kappa), time_part, cov_part
        self.index_dependent = bool(getattr(cov_part, "index_dependent", False))

    def sqrt(self, t, idx, X):
        u = self.time_part(np.asarray(t, dtype=float))
        v = self.cov_part.values_at(np.asarray(idx), X)
        return np.maximum(self.kappa * u * v, 0.0)

    def evaluate(self, t, idx, X):
        return self.sqrt(t, idx, X) ** 2

    def sup_bound(self, i, X, T):
        v = float(self.cov_part.values_at(np.asarray(i), X))
        return (self.kappa * v) ** 2 * self.time_part.sup_sq(T)

    def integral(self, i, X, T):
        v = float(self.cov_part.values_at(np.asarray(i), X))
        sq = self.time_part.sq_integral(T)
        return None if sq is None else (self.kappa * v) ** 2 * sq

    def descriptor(self):
        return (self.tag, _fmt(self.kappa), self.time_part.descriptor(),
                self.cov_part.descriptor())

    def to_dict(self):
        return {"tag": self.tag, "kappa": self.kappa, "time_part": self.time_part.to_dict(),
                "cov_part": self.cov_part.to_dict()}


class Squared(IntensitySurface):
    """Intensity ``max(g, 0)^2`` for an arbitrary vectorised callable ``g(t, x)``."""

    tag = "squared"

    def __init__(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], label: str,
                 bound: float | None = None):
        self.fn, self.label, self.bound = fn, label, bound

    def sqrt(self, t, idx, X):
        x = X.points[np.asarray(idx)]
        return np.maximum(self.fn(np.asarray(t, dtype=float), x), 0.0)

    def evaluate(self, t, idx, X):
        return self.sqrt(t, idx, X) ** 2

    def sup_bound(self, i, X, T):
        if self.bound is None:
            raise DomainError(f"no intensity bound declared for {self.label}")
        return self.bound

    def descriptor(self):
        return (self.tag, self.label)

    def to_dict(self):
        raise DomainError("callable surfaces cannot be serialised")


# --------------------------------------------------------------------------
# Samples, simulation, integrals
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProcessSample:
    """Sorted event times of each of the n processes."""

    events: tuple = field(default_factory=tuple)

    def __post_init__(self):
        evs = []
        for e in self.events:
            a = np.array(e, dtype=float).reshape(-1)
            if a.size > 1 and np.any(np.diff(a) < 0):
                raise ValueError("event lists must be sorted ascending")
            a.setflags(write=False)
            evs.append(a)
        object.__setattr__(self, "events", tuple(evs))

    @property
    def n(self) -> int:
        return len(self.events)

    def counts(self) -> np.ndarray:
        return np.array([e.size for e in self.events], dtype=int)

    def flat(self) -> tuple[np.ndarray, np.ndarray]:
        """All event times with the index of their process."""
        if not self.events:
            return np.zeros(0), np.zeros(0, dtype=int)
        times = np.concatenate(self.events)
        idx = np.repeat(np.arange(self.n), self.counts())
        return times, idx

    def check_domain(self, T: TimeDomain) -> None:
        for e in self.events:
            if e.size and not np.all(T.contains(e)):
                raise ValueError("event outside the time domain")

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, ProcessSample) and self.n == other.n
                and all(np.array_equal(a, b) for a, b in zip(self.events, other.events)))

    def __hash__(self):
        return hash(tuple(e.tobytes() for e in self.events))

    def to_json(self) -> str:
        return json.dumps([[float(t) for t in e] for e in self.events])

    @classmethod
    def from_json(cls, text: str) -> "ProcessSample":
        return cls(tuple(json.loads(text)))


def process_rng(seed: int, i: int) -> np.random.Generator:
    """Independent Philox stream for process ``i`` under ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(i)])))


def _inversion_draw(s: IntensitySurface, i: int, X: CovariateSet, T: TimeDomain,
                    rng: np.random.Generator) -> np.ndarray | None:
    total = s.integral(i, X, T)
    if total is None:
        return None
    u_probe = s.inverse_cumulative(np.array([0.5]), i, X, T)
    if u_probe is None:
        return None
    count = rng.poisson(total)
    return np.sort(s.inverse_cumulative(rng.random(count), i, X, T))


def simulate(s: IntensitySurface, X: CovariateSet, T: TimeDomain, seed: int) -> ProcessSample:
    """Draw one realisation of the n processes.

    Bounded intensities are simulated by thinning a homogeneous process at the
    rate ``s.sup_bound(i)``; unbounded ones fall back to inverting the
    closed-form cumulative intensity.
    """
    n = X.n
    if T.point_mass:
        evs = []
        for i in range(n):
            lam = s.integral(i, X, T)
            if lam is None:
                lam = float(s.evaluate(np.array(T.t_min), np.array(i), X))
            evs.append(np.full(process_rng(seed, i).poisson(lam), T.t_min))
        return ProcessSample(tuple(evs))

    proposals, owners, accept_u, direct = [], [], [], {}
    bounds = np.empty(n)
    for i in range(n):
        rng = process_rng(seed, i)
        bound = s.sup_bound(i, X, T)
        if not math.isfinite(bound):
            drawn = _inversion_draw(s, i, X, T, rng)
            if drawn is None:
                raise DomainError("intensity is unbounded on the domain and has no "
                                  "closed-form cumulative to invert")
            direct[i] = drawn
            continue
        if bound < 0:
            raise DomainError("negative intensity bound")
        bounds[i] = bound
        m = rng.poisson(bound * T.length)
        proposals.append(T.t_min + T.length * rng.random(m))
        accept_u.append(rng.random(m))
        owners.append(np.full(m, i))

    evs: list[np.ndarray] = [np.zeros(0)] * n
    if proposals:
        t = np.concatenate(proposals)
        own = np.concatenate(owners)
        u = np.concatenate(accept_u)
        vals = s.evaluate(t, own, X) if t.size else np.zeros(0)
        if np.any(vals < 0):
            raise DomainError("negative intensity value")
        keep = u * bounds[own] < vals
        t, own = t[keep], own[keep]
        order = np.lexsort((t, own))
        t, own = t[order], own[order]
        cuts = np.searchsorted(own, np.arange(n + 1))
        for i in range(n):
            if i not in direct:
                evs[i] = t[cuts[i]:cuts[i + 1]]
    for i, e in direct.items():
        evs[i] = e
    return ProcessSample(tuple(evs))


def integrate_intensity(s: IntensitySurface, i: int, X: CovariateSet, T: TimeDomain,
                        Q: Any = None) -> float:
    """``int_T s(t, x_i) dmu(t)``, in closed form when available."""
    if not 0 <= i < X.n:
        raise IndexError("process index out of range")
    val = s.integral(i, X, T)
    if val is not None:
        if not math.isfinite(val):
            raise DomainError("divergent intensity integral")
        return float(val)
    if T.point_mass:
        return float(s.evaluate(np.array(T.t_min), np.array(i), X))
    if Q is None:
        from .geometry import QuadratureRule
        Q = QuadratureRule.default(T)
    vals = s.evaluate(Q.nodes, np.full(Q.nodes.shape, i), X)
    out = float(np.dot(Q.weights, vals))
    if not math.isfinite(out):
        raise DomainError("divergent intensity integral")
    return out


def counting_integral(f: Callable[[np.ndarray], np.ndarray], events: Sequence[float]) -> float:
    """``sum over event times t of f(t)``."""
    ev = np.asarray(events, dtype=float)
    if ev.size == 0:
        return 0.0
    return float(np.sum(np.broadcast_to(f(ev), ev.shape)))


# --------------------------------------------------------------------------
# Serialisation
# --------------------------------------------------------------------------


def surface_from_dict(d: dict) -> IntensitySurface:
    tag = d["tag"]
    if tag == "constant":
        return Constant(d["lam"])
    if tag == "power_law":
        return PowerLaw(d["a"], d["b"])
    if tag == "exp_decay":
        return ExpDecay(d["a"], d["b"], d.get("k", 0))
    if tag == "product_exp":
        return ProductExp(d["a"], d["b"], d["theta"], d.get("family", "power"), d.get("k", 0))
    if tag == "piecewise_param":
        return PiecewiseParam(d["starts"], d["params"], d["n"],
                              SqrtFamily(d.get("family", "duane"), d.get("k", 0)))
    if tag == "grid":
        return Grid(d["nodes"], d["values"])
    if tag == "product":
        from .geometry import factor_from_dict
        return Product(d["kappa"], factor_from_dict(d["time_part"]),
                       factor_from_dict(d["cov_part"]))
    raise ValueError(f"unknown surface tag {tag!r}")
