"""Selection over a collection of nets by pairwise robust tests.

For a candidate ``f`` let ``R(f)`` be the candidates ``f'`` that win their
test against ``f``; ``gamma(f)`` is the largest Hellinger distance (squared)
from ``f`` to a member of ``R(f)`` and 0 when ``R(f)`` is empty.  The
selected candidate minimises

    V(f) = max(gamma(f), epsilon * pen(f))

where ``pen(f) = eta_bar(f)`` (``penalty="literal"``) or ``eta_bar(f)^2``
(``penalty="squared"``).  Ties go to the smaller ``eta_bar``, then to the
lexicographically smaller candidate id.

Two engines return the same selection.  ``full`` computes every row of the
test matrix.  ``pruned`` computes exact rows only for likely winners, uses
them to bound ``V`` from below for everybody else, and keeps computing rows
until no unresolved candidate can beat the incumbent.
"""

from __future__ import annotations

import collections.abc as cabc
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Histogram, QuadratureRule, default_rule
from .model_zoo import CandidateNet, LatticeCandidates, LinearSqrt, SpaceFactor, changepoint_weight
from .point_process import (
    Constant, CovariateSet, DomainError, IntensitySurface, PiecewiseParam, ProcessSample,
    Product, SqrtFamily, TimeDomain,
)
from .robust_tests import (
    BinnedSpace, EvaluationSpace, TestConstants, _zeta_from_roots, tie_coin,
)


@dataclass(frozen=True)
class SelectionConfig:
    epsilon: float = 1.0
    constants: TestConstants = field(default_factory=TestConstants.calibrated)
    tie_seed: int = 0
    penalty: str = "literal"
    engine: str = "auto"
    full_max: int = 2000
    champions: int = 16
    quadrature: QuadratureRule | None = None
    binned: bool = True
    table_limit: int = 60_000_000
    keep_matrix: bool = False

    def __post_init__(self):
        if not 0 < self.epsilon <= 4:
            raise ValueError("epsilon must lie in (0, 4]")
        if self.penalty not in ("literal", "squared"):
            raise ValueError("penalty is 'literal' or 'squared'")
        if self.engine not in ("auto", "full", "pruned"):
            raise ValueError("engine is 'auto', 'full' or 'pruned'")

    def penalty_of(self, eta: np.ndarray) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        return self.epsilon * (eta if self.penalty == "literal" else eta * eta)


@dataclass
class SelectionResult:
    selected: IntensitySurface
    index: int
    value: float
    eta_bar: float
    gamma: np.ndarray  # NaN where the row was never computed
    penalty: np.ndarray
    engine: str
    rows_computed: int
    n_candidates: int
    seconds: float
    rejection: np.ndarray | None = None  # boolean matrix, full engine with keep_matrix
    net_label: str = ""

    @property
    def chosen(self) -> IntensitySurface:
        return self.selected

    @property
    def tests_run(self) -> int:
        """Pairwise tests evaluated (each row holds ``m - 1`` of them)."""
        return self.rows_computed * max(self.n_candidates - 1, 0)

    def rejection_set(self, j: int) -> np.ndarray:
        if self.rejection is None:
            raise ValueError("the rejection matrix was not kept")
        return np.flatnonzero(self.rejection[j])

    def summary(self) -> dict:
        return {"selected": self.selected.ident, "net": self.net_label, "index": self.index,
                "value": self.value, "eta_bar": self.eta_bar, "engine": self.engine,
                "rows_computed": self.rows_computed, "n_candidates": self.n_candidates,
                "seconds": self.seconds}

    def to_json_dict(self) -> dict:
        """Serializable record; ``gamma`` lists ``null`` for rows never computed."""
        out = self.summary()
        out["gamma"] = [None if math.isnan(g) else float(g) for g in self.gamma]
        out["penalty"] = [float(p) for p in self.penalty]
        if self.rejection is not None:
            out["rejection_sets"] = [np.flatnonzero(r).tolist() for r in self.rejection]
        return out

    def same_choice(self, other: "SelectionResult") -> bool:
        """Equality of every deterministic field (timings excluded)."""
        a, b = self.to_json_dict(), other.to_json_dict()
        a.pop("seconds"), b.pop("seconds")
        return a == b


# --------------------------------------------------------------------------
# Row oracles
# --------------------------------------------------------------------------


def _stat_rows(gm1, ge1, GM, GE, wm, we) -> np.ndarray:
    """Statistic of one candidate against many; summation order is the same for every row,
    so ``T(f, f')`` and ``T(f', f)`` computed in different rows are exact negatives."""
    tot = gm1 * gm1 + GM * GM
    terms = (0.5 * np.sqrt(0.5 * tot) * (GM - gm1) - 0.5 * (GM * GM - gm1 * gm1)) * wm
    out = terms.sum(axis=-1)
    if GE.shape[-1]:
        out = out + (_zeta_from_roots(ge1, GE) * we).sum(axis=-1)
    return out


class RowOracle:
    """Interface: ``m``, ``eta``, ``score``, ``ident(j)``, ``row(j) -> (T(f_j, .), H^2(f_j, .))``."""

    m: int
    eta: np.ndarray
    score: np.ndarray

    def row(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def ident(self, j: int) -> str:
        raise NotImplementedError

    def candidate(self, j: int) -> IntensitySurface:
        raise NotImplementedError

    def level_groups(self) -> np.ndarray:
        """Integer label per candidate (net); champions include the best of every label."""
        return np.zeros(self.m, dtype=int)

    def net_label(self, j: int) -> str:
        return ""


def piecewise_constant_edges(s: IntensitySurface, T: TimeDomain) -> np.ndarray | None:
    """Edges of a time partition on which ``s`` is constant, or ``None``."""
    if isinstance(s, Constant):
        return np.array([T.t_min, T.t_max])
    if isinstance(s, LinearSqrt):
        if s.space.axis == "cov":
            return np.array([T.t_min, T.t_max])
        return s.space.edges if s.space.degree == 0 else None
    if isinstance(s, Product):
        tp = s.time_part
        if isinstance(tp, SpaceFactor) and tp.space.axis == "time" and tp.space.degree == 0:
            return tp.space.edges
        if isinstance(tp, Histogram):
            return tp.edges
    return None


_CHUNK = 1 << 16


class CandidateChain(cabc.Sequence):
    """Concatenation of candidate sequences, some of which may be lazy lattices."""

    def __init__(self, segments: Sequence[Sequence[IntensitySurface]]):
        self.segments = [seg for seg in segments if len(seg)]
        sizes = [len(seg) for seg in self.segments]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)[:-1] \
            if sizes else np.zeros(0, dtype=np.int64)
        self._len = int(sum(sizes))

    def __len__(self) -> int:
        return self._len

    def __getitem__(self, j):
        j = int(j)
        if not 0 <= j < self._len:
            raise IndexError(j)
        k = int(np.searchsorted(self.offsets, j, side="right")) - 1
        return self.segments[k][j - int(self.offsets[k])]


class TableOracle(RowOracle):
    """Rows from square-root tables at the ``mu`` points and at the events."""

    def __init__(self, candidates: Sequence[IntensitySurface], eta: np.ndarray,
                 labels: np.ndarray, sample: ProcessSample, X: CovariateSet, T: TimeDomain,
                 config: SelectionConfig):
        self.cands = candidates if isinstance(candidates, CandidateChain) \
            else CandidateChain([list(candidates)])
        self.m = len(self.cands)
        self.eta = np.asarray(eta, dtype=float)
        self.labels = np.asarray(labels)
        self.net_names: list[str] = []
        segs = self.cands.segments
        idx_dep = any(seg.index_dependent if isinstance(seg, LatticeCandidates)
                      else any(c.index_dependent for c in seg) for seg in segs)
        space = None
        if config.binned and not T.point_mass:
            edge_sets = []
            for seg in segs:
                if isinstance(seg, LatticeCandidates):
                    edge_sets.append(piecewise_constant_edges(seg[0], T))
                else:
                    edge_sets.extend(piecewise_constant_edges(c, T) for c in seg)
            if all(e is not None for e in edge_sets):
                edges = np.unique(np.concatenate(edge_sets))
                if edges.size <= 4097:
                    space = BinnedSpace(sample, X, T, edges, idx_dep)
        if space is None:
            space = EvaluationSpace(sample, X, T, config.quadrature, idx_dep)
        self.space = space
        size = self.m * (space.mu_t.size + space.ev_t.size)
        if size > config.table_limit:
            raise MemoryError(f"tables would hold {size} values (limit {config.table_limit})")
        P, E = space.mu_t.size, space.ev_t.size
        self.GM = np.empty((self.m, P))
        self.GE = np.empty((self.m, E))
        for seg, off in zip(segs, self.cands.offsets):
            if isinstance(seg, LatticeCandidates):
                Bm = seg.basis_at(space.mu_t, space.mu_idx)
                Be = seg.basis_at(space.ev_t, space.ev_idx)
                for a in range(0, len(seg), _CHUNK):
                    b = min(a + _CHUNK, len(seg))
                    self.GM[off + a:off + b] = seg.sqrt_block(Bm, a, b)
                    self.GE[off + a:off + b] = seg.sqrt_block(Be, a, b)
            else:
                for j, c in enumerate(seg):
                    self.GM[off + j], self.GE[off + j] = space.tables(c)
        self.wm, self.we = space.mu_w, space.ev_w
        with np.errstate(divide="ignore"):
            loglik = (np.log(self.GE * self.GE) * self.we).sum(axis=1) if E else np.zeros(self.m)
        self.score = loglik - (self.GM * self.GM * self.wm).sum(axis=1)
        self._ids: dict[int, str] = {}

    def row(self, j):
        T = np.empty(self.m)
        H = np.empty(self.m)
        gm, ge = self.GM[j], self.GE[j]
        for a in range(0, self.m, _CHUNK):
            b = min(a + _CHUNK, self.m)
            GM = self.GM[a:b]
            T[a:b] = _stat_rows(gm, ge, GM, self.GE[a:b], self.wm, self.we)
            d = GM - gm
            H[a:b] = 0.5 * (d * d * self.wm).sum(axis=1)
        T[j] = 0.0
        H[j] = 0.0
        return T, H

    def ident(self, j):
        if j not in self._ids:
            self._ids[j] = self.cands[j].ident
        return self._ids[j]

    def candidate(self, j):
        return self.cands[j]

    def level_groups(self):
        return self.labels

    def net_label(self, j):
        return self.net_names[int(self.labels[j])] if self.net_names else str(self.labels[j])


# --------------------------------------------------------------------------
# Engines
# --------------------------------------------------------------------------


def _wins(oracle: RowOracle, j: int, stat: np.ndarray, thr: np.ndarray,
          tie_seed: int) -> np.ndarray:
    """Boolean mask of ``f'`` accepted against ``f_j`` given ``T(f_j, f')`` and thresholds."""
    out = stat > thr
    ties = np.flatnonzero(stat == thr)
    if ties.size:
        idj = oracle.ident(j)
        for k in ties:
            if k == j:
                continue
            idk = oracle.ident(int(k))
            out[k] = (idk > idj) == tie_coin(tie_seed, idj, idk)
    out[j] = False
    return out


def _beats(oracle: RowOracle, c: int, stat_c: np.ndarray, thr_c: np.ndarray,
           tie_seed: int) -> np.ndarray:
    """Mask of ``f`` for which ``f_c`` belongs to ``R(f)``, read off row ``c``.

    ``T(f, f_c) = -T(f_c, f)`` and the threshold is negated as well.
    """
    stat, thr = -stat_c, -thr_c
    out = stat > thr
    ties = np.flatnonzero(stat == thr)
    if ties.size:
        idc = oracle.ident(c)
        for k in ties:
            if k == c:
                continue
            idk = oracle.ident(int(k))
            out[k] = (idc > idk) == tie_coin(tie_seed, idk, idc)
    out[c] = False
    return out


class _Best:
    def __init__(self, oracle: RowOracle):
        self.oracle = oracle
        self.key = None
        self.j = -1

    def offer(self, j: int, value: float) -> None:
        key = (value, float(self.oracle.eta[j]))
        if self.key is None or key < self.key[:2] or (
                key == self.key[:2] and self.oracle.ident(j) < self.key[2]):
            self.key = key + (self.oracle.ident(j),)
            self.j = j

    def beats(self, j: int, lower: float) -> bool:
        """True when a candidate with ``V >= lower`` cannot displace the incumbent."""
        key = (lower, float(self.oracle.eta[j]))
        if key != self.key[:2]:
            return key > self.key[:2]
        return self.oracle.ident(j) > self.key[2]


def _select(oracle: RowOracle, config: SelectionConfig) -> SelectionResult:
    t0 = time.perf_counter()
    m = oracle.m
    eta = oracle.eta
    eta2 = eta * eta
    pen = config.penalty_of(eta)
    b = config.constants.b
    gamma = np.full(m, np.nan)
    engine = config.engine
    if engine == "auto":
        engine = "full" if m <= config.full_max else "pruned"
    best = _Best(oracle)
    matrix = np.zeros((m, m), dtype=bool) if (engine == "full" and config.keep_matrix) else None
    rows = 0

    def compute(j: int):
        nonlocal rows
        stat, H = oracle.row(j)
        thr = b * (eta2 - eta2[j])
        win = _wins(oracle, j, stat, thr, config.tie_seed)
        gamma[j] = float(H[win].max()) if win.any() else 0.0
        best.offer(j, max(gamma[j], pen[j]))
        rows += 1
        if matrix is not None:
            matrix[j] = win
        return stat, thr, H

    if engine == "full":
        for j in range(m):
            compute(j)
    else:
        lower = pen.copy()
        done = np.zeros(m, dtype=bool)
        score = np.where(np.isfinite(oracle.score), oracle.score, -np.inf)
        order = np.argsort(-score, kind="stable")
        champs = list(order[:config.champions])
        groups = oracle.level_groups()
        _, first = np.unique(groups[order], return_index=True)
        for j in order[np.sort(first)][:64]:  # best-scoring candidate of every net
            if j not in champs:
                champs.append(j)

        def absorb(j: int):
            stat, thr, H = compute(j)
            done[j] = True
            beaten = _beats(oracle, j, stat, thr, config.tie_seed)
            np.maximum(lower, np.where(beaten, H, 0.0), out=lower)

        for j in champs:
            absorb(int(j))
        while True:
            v, e_best = best.key[0], best.key[1]
            strict = ~done & ((lower < v) | ((lower == v) & (eta < e_best)))
            tied = np.flatnonzero(~done & (lower == v) & (eta == e_best))
            # exact check of the remaining ties on (lower, eta, id)
            idx = np.concatenate([np.flatnonzero(strict),
                                  [j for j in tied if oracle.ident(int(j)) < best.key[2]]])
            if not idx.size:
                break
            idx = idx.astype(np.int64)[np.argsort(-score[idx.astype(np.int64)], kind="stable")]
            idx = [int(j) for j in idx[:max(1, config.champions)]]
            for j in idx:
                if not done[j] and not best.beats(j, float(lower[j])):
                    absorb(j)
                else:
                    done[j] = True
    j = best.j
    return SelectionResult(oracle.candidate(j), j, best.key[0], float(eta[j]), gamma, pen,
                           engine, rows, m, time.perf_counter() - t0, matrix,
                           oracle.net_label(j))


def flatten_collection(nets: Sequence[CandidateNet]) -> tuple[CandidateChain, np.ndarray,
                                                                np.ndarray]:
    """Distinct candidates, their radius (smallest over the nets holding them) and a net label.

    A lattice net stays lazy when no other net lives in the same space, since its
    points are then distinct from every other candidate.
    """
    def space_key(seq):
        return seq.space.descriptor() if isinstance(seq, LatticeCandidates) else None

    keys = [space_key(net.candidates) for net in nets]
    listed = {c.space.descriptor() for net in nets
              if not isinstance(net.candidates, LatticeCandidates)
              for c in net.candidates if isinstance(c, LinearSqrt)}
    lazy = [k is not None and keys.count(k) == 1 and k not in listed for k in keys]
    pos: dict = {}
    cands, eta, labels = [], [], []
    for li, net in enumerate(nets):
        if lazy[li]:
            continue
        for c in net.candidates:
            if c is None:
                raise ValueError("net holds descriptions only; use the change-point path")
            key = c.descriptor()
            if key in pos:
                j = pos[key]
                if net.eta_bar < eta[j]:
                    eta[j], labels[j] = net.eta_bar, li
            else:
                pos[key] = len(cands)
                cands.append(c)
                eta.append(net.eta_bar)
                labels.append(li)
    segments = [cands]
    eta_parts, label_parts = [np.array(eta, dtype=float)], [np.array(labels, dtype=int)]
    for li, net in enumerate(nets):
        if lazy[li]:
            segments.append(net.candidates)
            eta_parts.append(np.full(len(net), net.eta_bar))
            label_parts.append(np.full(len(net), li, dtype=int))
    return CandidateChain(segments), np.concatenate(eta_parts), np.concatenate(label_parts)


def eta_bar_of(f: IntensitySurface, nets: Sequence[CandidateNet]) -> float:
    """Smallest radius of a net containing ``f``."""
    radii = [net.eta_bar for net in nets if any(c == f for c in net.candidates)]
    if not radii:
        raise KeyError("candidate not in the collection")
    return min(radii)


def run_selection(nets: Sequence[CandidateNet], sample: ProcessSample, X: CovariateSet,
                  T: TimeDomain, config: SelectionConfig = SelectionConfig(),
                  cap: int = 100_000) -> SelectionResult:
    """Select one candidate from the union of ``nets`` for the observed ``sample``."""
    sample.check_domain(T)
    cands, eta, labels = flatten_collection(nets)
    if len(cands) > cap:
        raise ValueError(f"collection holds {len(cands)} candidates (cap {cap})")
    if not cands:
        raise ValueError("empty collection")
    oracle = TableOracle(cands, eta, labels, sample, X, T, config)
    oracle.net_names = [net.label for net in nets]
    return _select(oracle, config)


def mix_collections(collections: Sequence[tuple[Sequence[CandidateNet], float]],
                    rule=None, n: int | None = None,
                    constants: TestConstants | None = None) -> list[CandidateNet]:
    """Union of collections; every net's weight grows by the extra weight of its collection.

    Requires ``sum exp(-extra) <= 1``.  With a radius ``rule`` (and ``n``,
    ``constants``) radii are recomputed from the new weights, never shrinking
    below the covering radius the net was built for.
    """
    extras = [float(d) for _, d in collections]
    if any(d < 0 for d in extras):
        raise ValueError("extra weights are non-negative")
    total = sum(math.exp(-d) for d in extras)
    if total > 1.0 + 1e-12:
        raise ValueError(f"sum of exp(-weight) is {total:.6g} > 1")
    out = []
    for nets, extra in collections:
        for net in nets:
            mixed = net.with_weight(net.weight + extra)
            if rule is not None:
                if n is None or constants is None:
                    raise ValueError("recomputing radii needs n and constants")
                mixed.eta_bar = max(net.eta_bar, rule.radius(net.dim_bound, mixed.weight, n,
                                                             constants))
            out.append(mixed)
    return out


# --------------------------------------------------------------------------
# Change points with at most two intervals
# --------------------------------------------------------------------------


class ChangepointOracle(RowOracle):
    """Rows for piecewise-parametric candidates with one or two intervals.

    Candidate ``j < G`` uses grid parameter ``j`` for every process.  Candidate
    ``G + ((k - 1) G + p) G + q`` uses ``p`` for processes ``0..k-1`` and ``q``
    for ``k..n-1``.  Rows are assembled from cumulative per-process pair tables.
    """

    def __init__(self, family: SqrtFamily, grid: np.ndarray, sample: ProcessSample,
                 X: CovariateSet, T: TimeDomain, eta_one: float, eta_two: float,
                 Q: QuadratureRule | None = None, max_segments: int = 2):
        if max_segments not in (1, 2):
            raise ValueError("the fast path handles at most two intervals")
        grid = np.asarray(grid, dtype=float)
        self.family, self.grid, self.X, self.T = family, grid, X, T
        n = self.n = sample.n
        G = self.G = grid.shape[0]
        self.two = max_segments == 2 and n > 1
        Q = default_rule(T, Q)
        gq = np.maximum(family(Q.nodes[None, :], grid[:, :1], grid[:, 1:2]), 0.0)  # (G, q)
        a, bq = gq[:, None, :], gq[None, :, :]
        tot = a * a + bq * bq
        mu = ((0.5 * np.sqrt(0.5 * tot) * (bq - a) - 0.5 * (bq * bq - a * a))
              * Q.weights).sum(axis=-1) / n  # (G, G), antisymmetric
        d = a - bq
        h = 0.5 * (d * d * Q.weights).sum(axis=-1) / n
        ev_t, ev_idx = sample.flat()
        ge = np.maximum(family(ev_t[None, :], grid[:, :1], grid[:, 1:2]), 0.0)  # (G, E)
        tau = np.broadcast_to(mu, (n, G, G)).copy()
        if ev_t.size:
            order = np.argsort(ev_idx, kind="stable")
            ev_idx_s = ev_idx[order]
            ge_s = ge[:, order]
            bounds = np.searchsorted(ev_idx_s, np.arange(n + 1))
            for i in range(n):
                lo, hi = bounds[i], bounds[i + 1]
                if hi > lo:
                    g = ge_s[:, lo:hi]
                    z = _zeta_from_roots(g[:, None, :], g[None, :, :]).sum(axis=-1) / n
                    tau[i] = mu + z
            with np.errstate(divide="ignore"):
                lg = np.log(ge_s * ge_s)
            ll_ev = np.zeros((n, G))
            for i in range(n):
                lo, hi = bounds[i], bounds[i + 1]
                if hi > lo:
                    ll_ev[i] = lg[:, lo:hi].sum(axis=1)
        else:
            ll_ev = np.zeros((n, G))
        self.C = np.concatenate([np.zeros((1, G, G)), np.cumsum(tau, axis=0)])
        self.h = h
        ll = ll_ev - (gq * gq * Q.weights).sum(axis=1)[None, :]
        self.L = np.concatenate([np.zeros((1, G)), np.cumsum(ll, axis=0)])
        self.m = G + ((n - 1) * G * G if self.two else 0)
        self.eta = np.full(self.m, float(eta_one))
        self.eta[G:] = eta_two
        score = np.empty(self.m)
        score[:G] = self.L[n]
        if self.two:
            k = np.arange(1, n)
            first = self.L[k]  # (n-1, G)
            second = self.L[n][None, :] - self.L[k]
            score[G:] = (first[:, :, None] + second[:, None, :]).reshape(-1)
        self.score = score

    def decode(self, j: int) -> tuple[int, int, int]:
        """``(k, p, q)``; one-interval candidates have ``k = n`` and ``q = p``."""
        G, n = self.G, self.n
        if j < G:
            return n, j, j
        r = j - G
        k, rem = divmod(r, G * G)
        p, q = divmod(rem, G)
        return k + 1, p, q

    def candidate(self, j):
        k, p, q = self.decode(j)
        if k == self.n:
            return PiecewiseParam((0,), [self.grid[p]], self.n, self.family)
        return PiecewiseParam((0, k), [self.grid[p], self.grid[q]], self.n, self.family)

    def ident(self, j):
        return self.candidate(j).ident

    def net_label(self, j):
        k = self.decode(j)[0]
        return "changepoint[0]" if k == self.n else f"changepoint[0,{k}]"

    def level_groups(self):
        g = np.zeros(self.m, dtype=int)
        g[self.G:] = 1 + (np.arange(self.m - self.G) // (self.G * self.G))
        return g

    def _seg(self, lo, hi, p, q):
        """``sum_{lo <= i < hi} tau_i(p, q)`` with broadcasting over all arguments."""
        return self.C[hi, p, q] - self.C[lo, p, q]

    def row(self, j):
        n, G = self.n, self.G
        k, p, q = self.decode(j)
        C, h = self.C, self.h
        allp = np.arange(G)
        # one-interval rivals: pieces [0, k) with (p, .) and [k, n) with (q, .)
        T1 = (C[k, p, :] - C[0, p, :]) + (C[n, q, :] - C[k, q, :])
        H1 = k * h[p, :] + (n - k) * h[q, :]
        if not self.two:
            T1[j] = 0.0
            H1[j] = 0.0
            return T1, H1
        kk = np.arange(1, n)  # rival breakpoints
        lo = np.minimum(kk, k)
        hi = np.maximum(kk, k)
        # piece 1: [0, lo) uses (p, p'); piece 3: [hi, n) uses (q, q')
        S1 = C[lo][:, p, :] - C[0, p, :][None, :]                    # (n-1, G) over p'
        S3 = C[n, q, :][None, :] - C[hi][:, q, :]                    # (n-1, G) over q'
        # piece 2: [lo, hi) uses (p, q') when the rival breaks first, else (q, p')
        mid_q = C[k, p, :][None, :] - C[kk][:, p, :]                 # k' < k: over q'
        mid_p = C[kk][:, q, :] - C[k, q, :][None, :]                 # k' > k: over p'
        early = (kk < k)[:, None, None]
        late = (kk > k)[:, None, None]
        S2 = np.where(early, mid_q[:, None, :], 0.0) + np.where(late, mid_p[:, :, None], 0.0)
        T2 = (S1[:, :, None] + S2) + S3[:, None, :]
        n1 = lo.astype(float)[:, None, None]
        n3 = (n - hi).astype(float)[:, None, None]
        nm = (hi - lo).astype(float)[:, None, None]
        H2 = n1 * h[p, :][None, :, None] + n3 * h[q, :][None, None, :] + nm * (
            np.where(early, h[p, :][None, None, :], 0.0) + np.where(late, h[q, :][None, :, None],
                                                                      0.0))
        Tr = np.concatenate([T1, T2.reshape(-1)])
        Hr = np.concatenate([H1, H2.reshape(-1)])
        Tr[j] = 0.0
        Hr[j] = 0.0
        return Tr, Hr


def changepoint_radii(n: int, G: int, constants: TestConstants, factor: float | None = None,
                      dim: float | None = None) -> tuple[float, float]:
    """Hellinger radii of the one- and two-interval nets.

    A net of ``G^|P|`` grid candidates meets the cardinality condition for
    ``x >= 2`` with ``D = |P| log(G) / 4``; pass ``dim`` to use ``dim * |P|``
    instead.  Radii follow ``eta^2 = factor * max(D / 5, weight) / n``.
    """
    fac = 21.0 / constants.a if factor is None else factor
    out = []
    for size in (1, 2):
        d = (size * math.log(max(G, 2)) / 4.0) if dim is None else dim * size
        w = changepoint_weight(n, size)
        out.append(math.sqrt(fac * max(d / 5.0, w) / n))
    return out[0], out[1]


def select_changepoint(family: SqrtFamily, grid: np.ndarray, sample: ProcessSample,
                       X: CovariateSet, T: TimeDomain, eta_one: float, eta_two: float,
                       config: SelectionConfig = SelectionConfig(), max_segments: int = 2,
                       cap: int = 5_000_000) -> tuple[SelectionResult, ChangepointOracle]:
    """Selection among piecewise-parametric candidates with at most two intervals."""
    sample.check_domain(T)
    G = np.asarray(grid).shape[0]
    m = G + (sample.n - 1) * G * G * (max_segments == 2)
    if m > cap:
        raise ValueError(f"collection holds {m} candidates (cap {cap})")
    oracle = ChangepointOracle(family, grid, sample, X, T, eta_one, eta_two,
                               config.quadrature, max_segments)
    return _select(oracle, config), oracle


def breakpoint_of(s: PiecewiseParam) -> int | None:
    """Start of the second interval, or ``None`` for a single interval."""
    return s.starts[1] if len(s.starts) > 1 else None
