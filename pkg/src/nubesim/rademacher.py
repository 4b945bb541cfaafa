"""Rademacher functionals: discrete gradients, the B-terms of the
second-order Poincare bound, weighted 2-runs and Erdos-Renyi subgraph counts.

A functional is any callable mapping an ``(R, m)`` int8 array of +-1 bits
to ``R`` real values. Bit ``k`` equals +1 with probability ``p_k``.
"""
from dataclasses import asdict, dataclass, field
from functools import partial
from itertools import combinations
import csv
import json
import math

import numpy as np

from . import kernels
from .graphs import Graph, PatternGraph, count_copies
from .rng import replicate, stream

MAX_ENUM_SUPPORT = 24
MAX_EXACT_RUNS = 20


class ResourceError(RuntimeError):
    """Requested exact computation exceeds the enumeration budget."""


@dataclass(frozen=True)
class RademacherSpec:
    support: int
    probs: tuple

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        if len(probs) != self.support or self.support < 1:
            raise ValueError("probs must have one entry per coordinate")
        if any(not 0 < p < 1 for p in probs):
            raise ValueError("every p_k must lie in (0, 1)")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def symmetric(cls, m):
        return cls(m, (0.5,) * m)

    @classmethod
    def constant(cls, m, p):
        return cls(m, (float(p),) * m)

    @property
    def pq(self):
        p = np.asarray(self.probs)
        return p * (1.0 - p)


@dataclass
class PoincareTermsR:
    b1: float
    b2: float
    b3: float
    b4: float
    b5: float
    stderr1: float = 0.0
    stderr2: float = 0.0
    stderr3: float = 0.0
    stderr4: float = 0.0
    stderr5: float = 0.0
    exact: bool = False
    mc_meta: dict = field(default_factory=dict)

    @property
    def terms(self):
        return (self.b1, self.b2, self.b3, self.b4, self.b5)

    @property
    def stderrs(self):
        return (self.stderr1, self.stderr2, self.stderr3, self.stderr4, self.stderr5)

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


def _as_bits(bits, m):
    bits = np.asarray(bits)
    single = bits.ndim == 1
    bits = np.atleast_2d(bits).astype(np.int8)
    if bits.shape[1] != m:
        raise ValueError(f"expected {m} bits, got {bits.shape[1]}")
    return bits, single


def _with(bits, k, value):
    out = bits.copy()
    out[:, k] = value
    return out


def discrete_gradient(spec, F, bits, k):
    """D_k F = sqrt(p_k q_k) (F(bit k = +1) - F(bit k = -1))."""
    if not 0 <= k < spec.support:
        raise IndexError(f"coordinate {k} outside support {spec.support}")
    b, single = _as_bits(bits, spec.support)
    d = math.sqrt(spec.pq[k]) * (np.asarray(F(_with(b, k, 1)), float) - np.asarray(F(_with(b, k, -1)), float))
    return float(d[0]) if single else d


def second_gradient(spec, F, bits, k, l):
    """D_l D_k F from the four fixings of bits k and l."""
    if k == l:
        raise ValueError("second_gradient needs distinct coordinates")
    for c in (k, l):
        if not 0 <= c < spec.support:
            raise IndexError(f"coordinate {c} outside support {spec.support}")
    k, l = min(k, l), max(k, l)  # one evaluation order, so the result is exactly symmetric
    b, single = _as_bits(bits, spec.support)
    vals = {}
    for sk in (1, -1):
        for sl in (1, -1):
            vals[sk, sl] = np.asarray(F(_with(_with(b, k, sk), l, sl)), float)
    scale = math.sqrt(spec.pq[k] * spec.pq[l])
    d = scale * ((vals[1, 1] - vals[-1, 1]) - (vals[1, -1] - vals[-1, -1]))
    return float(d[0]) if single else d


def _state_bits(states, m):
    return np.where((states[:, None] >> np.arange(m)) & 1, 1, -1).astype(np.int8)


def _state_probs(states, spec):
    p = np.asarray(spec.probs)
    on = ((states[:, None] >> np.arange(spec.support)) & 1).astype(bool)
    return np.prod(np.where(on, p, 1.0 - p), axis=1)


def _all_values(spec, F, block=1 << 16):
    m = spec.support
    if m > MAX_ENUM_SUPPORT:
        raise ResourceError(f"enumeration over 2^{m} states exceeds the 2^{MAX_ENUM_SUPPORT} budget")
    n = 1 << m
    vals = np.empty(n)
    for a in range(0, n, block):
        st = np.arange(a, min(n, a + block), dtype=np.int64)
        vals[a:a + st.size] = F(_state_bits(st, m))
    return vals


def enumerate_distribution(spec, F, rtol=1e-12):
    """Exact law of F as sorted atoms and probabilities.

    Values within ``rtol`` (relative to the largest magnitude) are merged.
    """
    vals = _all_values(spec, F)
    probs = np.empty(vals.size)
    block = 1 << 16
    for a in range(0, vals.size, block):
        st = np.arange(a, min(vals.size, a + block), dtype=np.int64)
        probs[a:a + st.size] = _state_probs(st, spec)
    order = np.argsort(vals, kind="stable")
    v, p = vals[order], probs[order]
    tol = rtol * max(1.0, float(np.max(np.abs(v))))
    new = np.concatenate(([True], np.diff(v) > tol))
    groups = np.cumsum(new) - 1
    atoms = v[new]
    mass = np.bincount(groups, weights=p)
    return atoms, mass


def law_moment(atoms, probs, order):
    return math.fsum(np.asarray(probs) * np.asarray(atoms) ** order)


def write_law_csv(atoms, probs, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "probability"])
        for v, p in zip(atoms, probs):
            w.writerow([repr(float(v)), repr(float(p))])


class _Sums:
    """Weighted sums of the gradient products entering B1..B5."""

    def __init__(self, m):
        self.weight = 0.0
        self.g1 = np.zeros((m, m))
        self.g2 = np.zeros((m, m, m))
        self.e4 = np.zeros(m)
        self.h4 = np.zeros((m, m))

    def add(self, d, dd, w):
        # d: (m, R) first gradients, dd: (m, m, R) second gradients, w: (R,)
        d2 = d * d
        self.weight += float(np.sum(w))
        self.g1 += (d2 * w) @ d2.T
        dd2 = dd * dd
        for l in range(dd.shape[0]):
            self.g2[l] += (dd2[l] * w) @ dd2[l].T
        self.e4 += (d2 * d2) @ w
        self.h4 += (dd2 * dd2) @ w

    def __sub__(self, other):
        out = _Sums(self.e4.size)
        for name in ("weight", "g1", "g2", "e4", "h4"):
            setattr(out, name, getattr(self, name) - getattr(other, name))
        return out

    def __iadd__(self, other):
        for name in ("weight", "g1", "g2", "e4", "h4"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        return self

    def terms(self, pq):
        w = self.weight
        g1 = np.maximum(self.g1 / w, 0.0)
        g2 = np.maximum(self.g2 / w, 0.0)
        e4 = np.maximum(self.e4 / w, 0.0)
        h4 = np.maximum(self.h4 / w, 0.0)
        m = e4.size
        # l ranges over coordinates other than j, k (D_l D_l F vanishes identically)
        keep = np.ones((m, m, m), dtype=bool)
        idx = np.arange(m)
        keep[idx, idx, :] = False
        keep[idx, :, idx] = False
        g2 = np.where(keep, g2, 0.0)
        off = ~np.eye(m, dtype=bool)
        h4 = np.where(off, h4, 0.0)
        inv = 1.0 / pq
        b1 = float(np.sum(np.sqrt(g1)[None, :, :] * np.sqrt(g2)))
        b2 = float(np.sum(inv[:, None, None] * g2))
        b3 = float(np.sum(inv * e4))
        b4 = float(np.sum(inv[:, None] * np.sqrt(e4)[:, None] * np.sqrt(h4)))
        b5 = float(np.sum(inv[:, None] * inv[None, :] * h4))
        return np.array([b1, b2, b3, b4, b5])


def _gradients_from_table(vals, states, m, sq):
    d = np.empty((m, states.size))
    for k in range(m):
        bit = np.int64(1) << k
        d[k] = sq[k] * (vals[states | bit] - vals[states & ~bit])
    dd = np.zeros((m, m, states.size))
    for k in range(m):
        bk = np.int64(1) << k
        for l in range(k + 1, m):
            bl = np.int64(1) << l
            s = states & ~(bk | bl)
            v = vals[s | bk | bl] - vals[s | bl] - vals[s | bk] + vals[s]
            dd[l, k] = dd[k, l] = sq[k] * sq[l] * v
    return d, dd


def _gradients_sampled(spec, F, bits):
    m = spec.support
    sq = np.sqrt(spec.pq)
    plus = [np.asarray(F(_with(bits, k, 1)), float) for k in range(m)]
    minus = [np.asarray(F(_with(bits, k, -1)), float) for k in range(m)]
    d = np.array([sq[k] * (plus[k] - minus[k]) for k in range(m)])
    dd = np.zeros((m, m, bits.shape[0]))
    for k, l in combinations(range(m), 2):
        v = {}
        for sk in (1, -1):
            for sl in (1, -1):
                v[sk, sl] = np.asarray(F(_with(_with(bits, k, sk), l, sl)), float)
        dd[l, k] = dd[k, l] = sq[k] * sq[l] * (v[1, 1] - v[-1, 1] - v[1, -1] + v[-1, -1])
    return d, dd


def _sample_bits(gen, spec, count):
    p = np.asarray(spec.probs)
    return np.where(gen.random((count, spec.support)) < p, 1, -1).astype(np.int8)


def estimate_b_terms(spec, F, mode="enumerate", replicas=100_000, seed=0, groups=20):
    """B1..B5 exactly (``enumerate``) or by Monte Carlo with jackknife errors."""
    m = spec.support
    pq = spec.pq
    if mode == "enumerate":
        vals = _all_values(spec, F)
        sq = np.sqrt(pq)
        total = _Sums(m)
        block = max(1, (1 << 22) // (m * m + 1))
        for a in range(0, vals.size, block):
            st = np.arange(a, min(vals.size, a + block), dtype=np.int64)
            d, dd = _gradients_from_table(vals, st, m, sq)
            total.add(d, dd, _state_probs(st, spec))
        t = total.terms(pq)
        return PoincareTermsR(*t, exact=True, mc_meta={"mode": "enumerate", "states": int(vals.size)})
    if mode not in ("monte_carlo", "mc"):
        raise ValueError(f"unknown mode {mode!r}")
    if replicas < 2 * groups:
        raise ValueError("need at least two replicas per jackknife group")
    parts = []
    for g, count in enumerate(np.diff(np.linspace(0, replicas, groups + 1).astype(int))):
        gen = stream(seed, g)
        s = _Sums(m)
        done = 0
        while done < count:
            c = min(10_000, count - done)
            bits = _sample_bits(gen, spec, c)
            d, dd = _gradients_sampled(spec, F, bits)
            s.add(d, dd, np.ones(c))
            done += c
        parts.append(s)
    total = _Sums(m)
    for s in parts:
        total += s
    est = total.terms(pq)
    loo = np.array([(total - s).terms(pq) for s in parts])
    se = np.sqrt((groups - 1) / groups * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    meta = {"mode": "monte_carlo", "replicas": int(replicas), "seed": int(seed), "groups": int(groups)}
    return PoincareTermsR(*est, *se, exact=False, mc_meta=meta)


def uniform_bound_rademacher(terms):
    """sqrt15/2 sqrt(B1) + sqrt3/2 sqrt(B2) + 2 (2 sqrt(B3) + 2 sqrt6 sqrt(B4) + 2 sqrt3 sqrt(B5))."""
    b1, b2, b3, b4, b5 = terms.terms if isinstance(terms, PoincareTermsR) else terms
    if min(b1, b2, b3, b4, b5) < 0:
        raise ValueError("terms must be nonnegative")
    first = math.sqrt(15.0) / 2.0 * math.sqrt(b1) + math.sqrt(3.0) / 2.0 * math.sqrt(b2)
    delta = 2.0 * math.sqrt(b3) + 2.0 * math.sqrt(6.0) * math.sqrt(b4) + 2.0 * math.sqrt(3.0) * math.sqrt(b5)
    return first + 2.0 * delta


# weighted 2-runs


@dataclass(frozen=True)
class TwoRunsSpec:
    weights: tuple
    mean: float
    std_dev: float

    def __post_init__(self):
        w = tuple(float(a) for a in self.weights)
        if not any(w):
            raise ValueError("at least one weight must be nonzero")
        if self.std_dev <= 0:
            raise ValueError("std_dev must be positive")
        object.__setattr__(self, "weights", w)

    @property
    def support(self):
        return len(self.weights) + 1

    def rademacher(self):
        return RademacherSpec.symmetric(self.support)

    def functional(self):
        return partial(two_runs_eval, self)


def two_runs_raw(weights, bits):
    """G = sum_i a_i xi_i xi_{i+1} with xi = (X + 1) / 2."""
    a = np.asarray(weights, dtype=float)
    bits = np.asarray(bits)
    if bits.shape[-1] != a.size + 1:
        raise ValueError(f"need {a.size + 1} bits for {a.size} weights, got {bits.shape[-1]}")
    xi = (bits.astype(float) + 1.0) / 2.0
    return (xi[..., :-1] * xi[..., 1:]) @ a


def two_runs_eval(spec, bits):
    out = (two_runs_raw(spec.weights, bits) - spec.mean) / spec.std_dev
    return float(out) if np.ndim(out) == 0 else out


def two_runs_variance(weights):
    """Var G = (3/16) sum a_i^2 + (1/8) sum a_i a_{i+1} for fair bits."""
    a = np.asarray(weights, dtype=float)
    return 3.0 / 16.0 * math.fsum(a * a) + 1.0 / 8.0 * math.fsum(a[:-1] * a[1:])


def two_runs_moments(weights, exact=True):
    """(mean, variance) of G; ``exact`` enumerates all 2^{m+1} fair bit strings."""
    a = np.asarray(weights, dtype=float)
    mean = math.fsum(a) / 4.0
    if not exact:
        return mean, two_runs_variance(a)
    if a.size > MAX_EXACT_RUNS:
        raise ResourceError(f"exact 2-runs moments limited to m <= {MAX_EXACT_RUNS}")
    m = a.size + 1
    g = two_runs_raw(a, _state_bits(np.arange(1 << m, dtype=np.int64), m))
    mu = math.fsum(g) / g.size
    return mu, math.fsum((g - mu) ** 2) / g.size


def make_two_runs(weights):
    weights = tuple(float(a) for a in weights)
    exact = len(weights) <= MAX_EXACT_RUNS
    mean, var = two_runs_moments(weights, exact=exact)
    if var <= 0:
        raise ValueError("degenerate 2-runs statistic (zero variance)")
    return TwoRunsSpec(weights, mean, math.sqrt(var))


def two_runs_norm_bound(weights):
    """||a||_4^2 / ||a||_2^2."""
    a = np.asarray(weights, dtype=float)
    s2 = math.fsum(a * a)
    if s2 == 0:
        raise ValueError("weights must not all vanish")
    return math.sqrt(math.fsum(a**4)) / s2


def sample_two_runs(spec, n_samples, seed, workers=1, chunk=50_000):
    return replicate(partial(_two_runs_chunk, spec=spec), n_samples, seed, chunk=chunk, workers=workers)


def _two_runs_chunk(gen, count, spec):
    out = np.empty(count)
    step = max(1, 4_000_000 // spec.support)
    for s in range(0, count, step):
        c = min(step, count - s)
        bits = np.where(gen.random((c, spec.support)) < 0.5, 1, -1).astype(np.int8)
        out[s:s + c] = two_runs_eval(spec, bits)
    return out


# Erdos-Renyi subgraph counts


@dataclass(frozen=True)
class ErSpec:
    n: int
    p: float
    pattern: PatternGraph
    mean: float = 0.0
    std_dev: float = 1.0

    def __post_init__(self):
        if self.pattern.n_edges < 1:
            raise ValueError("pattern needs at least one edge")
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")
        if self.std_dev <= 0:
            raise ValueError("std_dev must be positive")

    @property
    def support(self):
        return self.n * (self.n - 1) // 2

    def rademacher(self):
        return RademacherSpec.constant(self.support, self.p)

    def functional(self):
        return partial(er_eval, self)


def er_counts(n, edge_bits, pattern):
    """Copies of ``pattern`` for each row of edge slots (i < j, lexicographic)."""
    bits = np.atleast_2d(np.asarray(edge_bits)).astype(np.int8)
    if bits.shape[1] != n * (n - 1) // 2:
        raise ValueError(f"need {n * (n - 1) // 2} edge slots for n = {n}")
    if pattern == PatternGraph.named("edge"):
        return np.count_nonzero(bits > 0, axis=1).astype(np.int64)
    if pattern == PatternGraph.named("triangle") and n <= 64:
        return kernels.triangle_counts(np.ascontiguousarray(bits), n)
    iu = np.triu_indices(n, 1)
    out = np.empty(bits.shape[0], dtype=np.int64)
    for g in range(bits.shape[0]):
        on = bits[g] > 0
        out[g] = count_copies(Graph.from_edges(n, np.column_stack([iu[0][on], iu[1][on]])), pattern)
    return out


def er_subgraph_count(n, edge_bits, pattern):
    return int(er_counts(n, np.asarray(edge_bits).reshape(1, -1), pattern)[0])


def er_eval(spec, bits):
    out = (er_counts(spec.n, bits, spec.pattern) - spec.mean) / spec.std_dev
    return out


def _copies_in_complete(n, pattern):
    q = pattern.n_vertices
    return math.comb(n, q) * math.factorial(q) // pattern.automorphisms


def er_moments(n, p, pattern, n_pilot=200_000, seed=0):
    """(mean, variance, method) of the copy count W."""
    m = n * (n - 1) // 2
    e = pattern.n_edges
    mean = _copies_in_complete(n, pattern) * p**e
    if pattern == PatternGraph.named("edge"):
        return mean, m * p * (1 - p), "closed_form"
    if pattern == PatternGraph.named("triangle"):
        t = math.comb(n, 3)
        var = t * (p**3 - p**6) + t * 3 * (n - 3) * (p**5 - p**6)
        return mean, var, "closed_form"
    if m <= MAX_EXACT_RUNS:
        spec = RademacherSpec.constant(m, p)
        atoms, probs = enumerate_distribution(spec, lambda b: er_counts(n, b, pattern).astype(float))
        mu = law_moment(atoms, probs, 1)
        return mu, law_moment(atoms, probs, 2) - mu * mu, "enumeration"
    gen = stream(seed, 0)
    bits = np.where(gen.random((n_pilot, m)) < p, 1, -1).astype(np.int8)
    w = er_counts(n, bits, pattern).astype(float)
    return float(w.mean()), float(w.var(ddof=1)), "pilot"


def make_er(n, p, pattern):
    if isinstance(pattern, str):
        pattern = PatternGraph.named(pattern)
    mean, var, _ = er_moments(n, p, pattern)
    if var <= 0:
        raise ValueError("degenerate subgraph count (zero variance)")
    return ErSpec(int(n), float(p), pattern, mean, math.sqrt(var))


def sample_er(spec, n_samples, seed, workers=1, chunk=20_000):
    return replicate(partial(_er_chunk, spec=spec), n_samples, seed, chunk=chunk, workers=workers)


def _er_chunk(gen, count, spec):
    out = np.empty(count)
    step = max(1, 2_000_000 // spec.support)
    for s in range(0, count, step):
        c = min(step, count - s)
        bits = np.where(gen.random((c, spec.support)) < spec.p, 1, -1).astype(np.int8)
        out[s:s + c] = er_eval(spec, bits)
    return out


def _edge_subsets(pattern):
    edges = sorted(pattern.edges)
    for r in range(1, len(edges) + 1):
        yield from combinations(edges, r)


def psi(pattern, n, p):
    """min over subgraphs H with e_H >= 1 of n^{v_H} p^{e_H} (H spanned by its edges)."""
    if pattern.n_edges < 1:
        raise ValueError("pattern needs at least one edge")
    best = math.inf
    for sub in _edge_subsets(pattern):
        verts = {v for e in sub for v in e}
        best = min(best, float(n) ** len(verts) * p ** len(sub))
    return best


def psi_naive(pattern, n, p):
    """Same minimum over all (vertex set, edge set) subgraphs, isolated vertices allowed."""
    best = math.inf
    q = pattern.n_vertices
    for r in range(1, q + 1):
        for verts in combinations(range(q), r):
            inside = [e for e in sorted(pattern.edges) if e[0] in verts and e[1] in verts]
            for k in range(1, len(inside) + 1):
                for _ in combinations(inside, k):
                    best = min(best, float(n) ** r * p**k)
    return best


def er_bound_scale(n, p, pattern):
    """(q Psi)^{-1/2} with q = 1 - p."""
    return 1.0 / math.sqrt((1.0 - p) * psi(pattern, n, p))
