"""Subgraph counts in random geometric graphs over a Poisson process.

The functional is the standardized number of non-induced copies of a
connected pattern; the one-vertex pattern ``point`` gives the (linear)
point-count functional. Add-one costs are computed locally: a copy through
``x`` lives inside the ball of radius ``(q - 1) r`` around ``x``.
"""
from dataclasses import asdict, dataclass, field
from functools import partial
import csv
import json
import math

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .graphs import Graph, PatternGraph, copies_through, copies_through_pair, count_copies
from .rng import replicate, stream

MAX_MEAN_POINTS = 1e8


@dataclass(frozen=True)
class Window:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise ValueError("lower and upper must have the same positive length")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError("window must have positive volume (lower < upper componentwise)")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim=2):
        return cls((0.0,) * dim, (1.0,) * dim)

    @property
    def dim(self):
        return len(self.lower)

    @property
    def volume(self):
        return math.prod(b - a for a, b in zip(self.lower, self.upper))

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def uniform(self, gen, size):
        lo = np.asarray(self.lower)
        return lo + (np.asarray(self.upper) - lo) * gen.random((size, self.dim))


@dataclass(frozen=True)
class RggSpec:
    window: Window
    intensity: float
    radius: float
    pattern: PatternGraph
    v_const: float = 1.0
    std_mean: float = 0.0
    std_dev: float = 1.0

    def __post_init__(self):
        if self.intensity <= 0 or self.radius <= 0:
            raise ValueError("intensity and radius must be positive")
        if not self.pattern.is_connected():
            raise ValueError("pattern must be connected")
        if self.std_dev <= 0:
            raise ValueError("std_dev must be positive")

    @property
    def q(self):
        return self.pattern.n_vertices

    @property
    def mean_points(self):
        return self.intensity * self.window.volume


@dataclass
class PoincareTermsP:
    a1: float
    a2: float
    a3: float
    a4: float
    a5: float
    stderr1: float
    stderr2: float
    stderr3: float
    stderr4: float
    stderr5: float
    mc_meta: dict = field(default_factory=dict)

    @property
    def terms(self):
        return (self.a1, self.a2, self.a3, self.a4, self.a5)

    @property
    def stderrs(self):
        return (self.stderr1, self.stderr2, self.stderr3, self.stderr4, self.stderr5)

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


def unit_ball_volume(dim):
    return math.pi ** (dim / 2.0) / math.gamma(dim / 2.0 + 1.0)


def _guard(window, intensity):
    mean = intensity * window.volume
    if mean >= MAX_MEAN_POINTS:
        raise MemoryError(f"intensity * volume = {mean:.3g} exceeds the desk-scale guard {MAX_MEAN_POINTS:.0g}")
    return mean


def sample_ppp(window, intensity, seed=None, gen=None):
    """Poisson process on the box: Poisson count, then i.i.d. uniform points."""
    mean = _guard(window, intensity)
    gen = gen if gen is not None else stream(seed, 0)
    return window.uniform(gen, int(gen.poisson(mean)))


def sample_ppp_batch(gen, window, intensity, size):
    """``size`` independent configurations as (points, offsets)."""
    mean = _guard(window, intensity)
    counts = gen.poisson(mean, size=size)
    offsets = np.zeros(size + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return np.ascontiguousarray(window.uniform(gen, int(offsets[-1]))), offsets


def rgg(points, radius):
    """Geometric graph: edge iff 0 < |x - y| <= radius."""
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return Graph.from_edges(len(points), [])
    pairs = cKDTree(points).query_pairs(radius, output_type="ndarray")
    if len(pairs):
        d2 = np.sum((points[pairs[:, 0]] - points[pairs[:, 1]]) ** 2, axis=1)
        pairs = pairs[(d2 > 0.0) & (d2 <= radius * radius)]
    return Graph.from_edges(len(points), pairs)


def count_subgraphs(points, radius, pattern):
    """Number of non-induced copies of ``pattern`` in the geometric graph."""
    points = np.asarray(points, dtype=float)
    if len(points) < pattern.n_vertices:
        return 0
    points = np.ascontiguousarray(points).reshape(len(points), -1)
    if pattern.n_vertices == 1:
        return len(points)
    if pattern == PatternGraph.named("edge"):
        return int(kernels.pair_counts(points, np.array([0, len(points)], dtype=np.int64), radius)[0])
    return count_copies(rgg(points, radius), pattern)


def batch_counts(points, offsets, radius, pattern):
    """Counts for each configuration block of a concatenated batch."""
    if pattern.n_vertices == 1:
        return np.diff(offsets)
    if pattern == PatternGraph.named("edge"):
        return kernels.pair_counts(points, offsets, radius)
    return np.array(
        [count_subgraphs(points[offsets[b]:offsets[b + 1]], radius, pattern) for b in range(len(offsets) - 1)],
        dtype=np.int64,
    )


def _local(points, centres, reach):
    points = np.asarray(points, dtype=float).reshape(-1, len(centres[0]))
    keep = np.zeros(len(points), dtype=bool)
    for c in centres:
        keep |= np.sum((points - c) ** 2, axis=1) <= reach * reach
    return points[keep]


def _rooted(points, radius, pattern, new):
    """Copies through every point of ``new`` after adding them to ``points``."""
    reach = max(pattern.n_vertices - 1, 1) * radius
    near = _local(points, new, reach)
    allpts = np.vstack([near, np.asarray(new, dtype=float)])
    g = rgg(allpts, radius)
    base = len(near)
    if len(new) == 1:
        return copies_through(g, pattern, base)
    return copies_through_pair(g, pattern, base, base + 1)


def _check_inside(spec, *xs):
    for x in xs:
        if not spec.window.contains(x):
            raise ValueError(f"point {np.asarray(x).tolist()} lies outside the window")


def add_one_cost(spec, points, x):
    """D_x F = (F(points + x) - F(points)), standardized."""
    _check_inside(spec, x)
    x = np.asarray(x, dtype=float)
    pattern = spec.pattern
    if pattern.n_vertices == 1:
        return 1.0 / spec.std_dev
    if pattern == PatternGraph.named("edge"):
        pts = np.ascontiguousarray(points, dtype=float).reshape(-1, spec.window.dim)
        c = kernels.neighbor_counts(pts, np.array([0, len(pts)], dtype=np.int64), x[None, :], spec.radius)
        return float(c[0, 0]) / spec.std_dev
    return _rooted(points, spec.radius, pattern, [x]) / spec.std_dev


def second_diff(spec, points, x, y):
    """D^2_{x,y} F: copies through both x and y, standardized."""
    _check_inside(spec, x, y)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pattern = spec.pattern
    if pattern.n_vertices == 1:
        return 0.0
    d2 = float(np.sum((x - y) ** 2))
    if d2 == 0.0 or d2 > ((pattern.n_vertices - 1) * spec.radius) ** 2:
        return 0.0
    if pattern == PatternGraph.named("edge"):
        return (1.0 if d2 <= spec.radius**2 else 0.0) / spec.std_dev
    return _rooted(points, spec.radius, pattern, [x, y]) / spec.std_dev


def _statistic_chunk(gen, count, window, intensity, radius, pattern, mean, sd):
    pts, off = sample_ppp_batch(gen, window, intensity, count)
    return (batch_counts(pts, off, radius, pattern) - mean) / sd


def sample_counts(window, intensity, radius, pattern, n_samples, seed, workers=1):
    """Unstandardized copy counts for ``n_samples`` independent processes."""
    fn = partial(_statistic_chunk, window=window, intensity=intensity, radius=radius,
                 pattern=pattern, mean=0.0, sd=1.0)
    return replicate(fn, n_samples, seed, chunk=20_000, workers=workers)


def standardize(window, intensity, radius, pattern, n_pilot=100_000, seed=0, workers=1):
    """(mean, std) of the count: exact for the point count, pilot Monte Carlo otherwise."""
    if pattern.n_vertices == 1:
        m = intensity * window.volume
        return m, math.sqrt(m), {"pilot": "exact"}
    counts = sample_counts(window, intensity, radius, pattern, n_pilot, seed, workers)
    meta = {"pilot": "monte_carlo", "pilot_samples": int(n_pilot), "pilot_seed": int(seed)}
    return float(np.mean(counts)), float(np.std(counts, ddof=1)), meta


def make_spec(window, intensity, radius, pattern, v_const=1.0, n_pilot=100_000, seed=0, workers=1):
    if isinstance(pattern, str):
        pattern = PatternGraph.named(pattern)
    mean, sd, meta = standardize(window, intensity, radius, pattern, n_pilot, seed, workers)
    if sd <= 0:
        raise ValueError("degenerate statistic: zero variance in the pilot run")
    spec = RggSpec(window, float(intensity), float(radius), pattern, float(v_const), mean, sd)
    return spec, meta


def sample_statistic(spec, n_samples, seed, workers=1, chunk=20_000):
    fn = partial(_statistic_chunk, window=spec.window, intensity=spec.intensity, radius=spec.radius,
                 pattern=spec.pattern, mean=spec.std_mean, sd=spec.std_dev)
    return replicate(fn, n_samples, seed, chunk=chunk, workers=workers)


def _inner_differences(gen, spec, x1, x2, x3, inner):
    """Per-replica (D_x1, D_x2, D2_13, D2_23, D2_12) over ``inner`` fresh processes."""
    pts, off = sample_ppp_batch(gen, spec.window, spec.intensity, inner)
    pattern = spec.pattern
    sd = spec.std_dev
    if pattern.n_vertices == 1:
        ones = np.full(inner, 1.0 / sd)
        zeros = np.zeros(inner)
        return ones, ones.copy(), zeros, zeros.copy(), zeros.copy()
    if pattern == PatternGraph.named("edge"):
        nc = kernels.neighbor_counts(pts, off, np.vstack([x1, x2]), spec.radius)
        d1 = nc[:, 0] / sd
        d2 = nc[:, 1] / sd
        s13 = np.full(inner, second_diff(spec, pts[:0], x1, x3))
        s23 = np.full(inner, second_diff(spec, pts[:0], x2, x3))
        s12 = np.full(inner, second_diff(spec, pts[:0], x1, x2))
        return d1, d2, s13, s23, s12
    out = np.empty((5, inner))
    for b in range(inner):
        block = pts[off[b]:off[b + 1]]
        out[0, b] = add_one_cost(spec, block, x1)
        out[1, b] = add_one_cost(spec, block, x2)
        out[2, b] = second_diff(spec, block, x1, x3)
        out[3, b] = second_diff(spec, block, x2, x3)
        out[4, b] = second_diff(spec, block, x1, x2)
    return tuple(out)


def _sqrt_mean_jackknife(a, b, groups):
    """sqrt(mean a) sqrt(mean b) with a grouped-jackknife bias estimate."""
    full = math.sqrt(a.mean()) * math.sqrt(b.mean())
    idx = np.array_split(np.arange(a.size), groups)
    loo = []
    for g in idx:
        mask = np.ones(a.size, dtype=bool)
        mask[g] = False
        loo.append(math.sqrt(a[mask].mean()) * math.sqrt(b[mask].mean()))
    return full, (groups - 1) * (float(np.mean(loo)) - full)


def _tuple_terms(gen, spec, inner, groups):
    x1, x2, x3 = spec.window.uniform(gen, 3)
    d1, d2, s13, s23, s12 = _inner_differences(gen, spec, x1, x2, x3, inner)
    m = spec.mean_points
    p1 = d1 * d1 * d2 * d2
    p2 = s13 * s13 * s23 * s23
    q1 = d1**4
    q2 = s12**4
    r1, b1 = _sqrt_mean_jackknife(p1, p2, groups)
    r4, b4 = _sqrt_mean_jackknife(q1, q2, groups)
    vals = (
        r1 * m**3,
        p2.mean() * m**3,
        q1.mean() * m,
        6.0 * r4 * m**2,
        3.0 * q2.mean() * m**2,
    )
    return vals, (b1 * m**3, 6.0 * b4 * m**2)


def _terms_chunk(gen, count, spec, inner, groups):
    out = np.empty((count, 7))
    for i in range(count):
        vals, bias = _tuple_terms(gen, spec, inner, groups)
        out[i, :5] = vals
        out[i, 5:] = bias
    return out


def _mean_and_stderr(col):
    if np.ptp(col) == 0.0:
        return float(col[0]), 0.0
    return float(np.mean(col)), float(np.std(col, ddof=1) / math.sqrt(col.size))


def estimate_poincare_terms(spec, outer, inner, seed, workers=1, groups=10, chunk=100):
    """Monte Carlo estimates of the second-order Poincare terms A1..A5.

    Each mu^j integral uses ``outer`` uniform tuples on W^j scaled by
    (t Vol W)^j; each inner expectation uses ``inner`` fresh processes.
    Tuples run in replica chunks keyed by (seed, chunk index).
    """
    if outer < 2 or inner < 2:
        raise ValueError("outer and inner must be at least 2")
    groups = max(2, min(groups, inner))
    rows = replicate(
        partial(_terms_chunk, spec=spec, inner=inner, groups=groups),
        outer, seed, chunk=chunk, workers=workers,
    )
    est = [_mean_and_stderr(rows[:, i]) for i in range(5)]
    meta = {
        "outer": int(outer),
        "inner": int(inner),
        "point_draws": int(outer) * 3,
        "seed": int(seed),
        "jackknife_bias_a1": float(np.mean(rows[:, 5])),
        "jackknife_bias_a4": float(np.mean(rows[:, 6])),
    }
    return PoincareTermsP(
        *(e[0] for e in est), *(e[1] for e in est), mc_meta=meta
    )


def uniform_bound_poisson(terms):
    """2 sqrt(A1) + sqrt(A2) + 2 (sqrt(A3) + sqrt(A4 + A5))."""
    a1, a2, a3, a4, a5 = terms.terms if isinstance(terms, PoincareTermsP) else terms
    if min(a1, a2, a3, a4, a5) < 0:
        raise ValueError("terms must be nonnegative")
    return 2.0 * math.sqrt(a1) + math.sqrt(a2) + 2.0 * (math.sqrt(a3) + math.sqrt(a4 + a5))


def variance_lower_bound(q, v, intensity, radius, dim):
    """v max(t^{q-1} (kappa_d r^d)^{2q-2}, t^q (kappa_d r^d)^{q-1})."""
    if q < 1 or v <= 0 or intensity <= 0 or radius < 0 or dim < 1:
        raise ValueError("invalid arguments")
    ball = unit_ball_volume(dim) * radius**dim
    return v * max(intensity ** (q - 1) * ball ** (2 * q - 2), intensity**q * ball ** (q - 1))


def concentration_c_rgg(q, v, intensity, radius, dim, volume):
    """sqrt(v t min(1, t kappa_d r^d)^{q-1}) / (q^{3q} max(1, Vol/v))."""
    if q < 1 or v <= 0 or intensity <= 0 or radius <= 0 or volume <= 0:
        raise ValueError("invalid arguments")
    ball = unit_ball_volume(dim) * radius**dim
    num = math.sqrt(v * intensity * min(1.0, intensity * ball) ** (q - 1))
    return num / (q ** (3 * q) * max(1.0, volume / v))


def poisson_tail_bound(z, q, c):
    """2 exp(-min(z^2 / 2^q, (c z)^{1/q}) / 4)."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0) or q < 1 or c <= 0:
        raise ValueError("need z > 0, q >= 1, c > 0")
    out = 2.0 * np.exp(-0.25 * np.minimum(z * z / 2.0**q, (c * z) ** (1.0 / q)))
    return out.item() if out.ndim == 0 else out


def rgg_nonuniform_bound(z, q, c_rgg, a_n, c=1.0):
    """Non-uniform envelope for standardized subgraph counts, times the rate a_n."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0) or a_n <= 0 or c_rgg <= 0:
        raise ValueError("need z > 0, a_n > 0, c_rgg > 0")
    inner = np.minimum(z * z / 2.0 ** (q + 2), (z / 2.0) ** (1.0 / q) * c_rgg ** (1.0 / q))
    out = (math.sqrt(2.0) * np.exp(-inner / 8.0) + c * np.exp(-0.25 * z * z)) * a_n
    return out.item() if out.ndim == 0 else out


def dump_points_csv(points, path):
    points = np.asarray(points, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(points.shape[1] if points.ndim == 2 else 0)])
        for row in points:
            w.writerow([repr(float(v)) for v in row])
