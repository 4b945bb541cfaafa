"""Empirical distribution machinery: exact Kolmogorov distances, weighted
(non-uniform) distances, tails, moments, DKW bands and log-log rate fits.

Distances are computed on the empirical measure itself; nothing is binned.
The same routines accept a discrete law (atoms plus probabilities), which is
how exact enumeration results are compared with the normal.
"""
from dataclasses import dataclass, field
import json
import math
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ndtr

DEFAULT_GRID = 2048


@dataclass
class SampleBatch:
    values: np.ndarray
    seed: int = 0
    model_tag: str = ""
    n_samples: int = field(init=False)

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if v.size and not np.all(np.isfinite(v)):
            raise ValueError("samples must be finite")
        self.values = v
        self.n_samples = int(v.size)

    def save(self, path):
        """Write ``path`` (count header + little-endian float64) and ``path.json``."""
        path = Path(path)
        with open(path, "wb") as fh:
            fh.write(np.uint64(self.n_samples).astype("<u8").tobytes())
            fh.write(self.values.astype("<f8").tobytes())
        meta = {"model_tag": self.model_tag, "seed": int(self.seed), "n_samples": self.n_samples}
        Path(str(path) + ".json").write_text(json.dumps(meta, sort_keys=True))

    @classmethod
    def load(cls, path):
        path = Path(path)
        raw = path.read_bytes()
        (count,) = np.frombuffer(raw[:8], dtype="<u8")
        values = np.frombuffer(raw[8:], dtype="<f8")
        if values.size != count:
            raise ValueError(f"header says {int(count)} values, file holds {values.size}")
        meta_path = Path(str(path) + ".json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(values.copy(), seed=meta.get("seed", 0), model_tag=meta.get("model_tag", ""))


@dataclass
class KsReport:
    uniform: float
    weighted: dict
    argmax_z: dict
    dkw_band: float


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float


def _as_law(data, probs=None):
    """Sorted atoms with left/right CDF values at each atom."""
    if isinstance(data, SampleBatch):
        x = data.values
    else:
        x = np.asarray(data, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    if probs is None:
        x = np.sort(x) if not isinstance(data, SampleBatch) else x
        n = x.size
        right = np.arange(1, n + 1) / n
        left = np.arange(0, n) / n
        return x, left, right
    p = np.asarray(probs, dtype=float).ravel()
    order = np.argsort(x, kind="stable")
    x, p = x[order], p[order]
    right = np.cumsum(p)
    right /= right[-1]
    left = np.concatenate(([0.0], right[:-1]))
    return x, left, right


def _ecdf_at(x, right, z):
    idx = np.searchsorted(x, z, side="right")
    return np.where(idx > 0, right[np.maximum(idx - 1, 0)], 0.0)


def ks_distance(data, probs=None):
    """sup_z |F_hat(z) - Phi(z)| from the order statistics (or a discrete law)."""
    x, left, right = _as_law(data, probs)
    c = ndtr(x)
    return float(max(np.max(right - c), np.max(c - left)))


def _tail_argmax(k, lo, upper):
    """Maximise (1+|z|)^k (1 - Phi(z)) over z >= lo (upper=True), or the mirror."""

    def objective(z):
        return (1.0 + abs(z)) ** k * ndtr(-z if upper else z)

    sign = 1.0 if upper else -1.0
    start = sign * lo
    # the unconstrained maximiser sits near z ~ k for large k, never beyond k + 40
    candidates = [start]
    if k > 0:
        stop = max(start, 0.0) + k + 40.0
        res = minimize_scalar(
            lambda t: -objective(sign * t), bounds=(start, stop), method="bounded",
            options={"xatol": 1e-10},
        )
        candidates.append(float(res.x))
        grid = np.linspace(start, stop, 257)
        candidates.append(float(grid[np.argmax([objective(sign * t) for t in grid])]))
    best = max(candidates, key=lambda t: objective(sign * t))
    return sign * best


def weighted_ks(data, k, probs=None, grid=DEFAULT_GRID):
    """sup_z (1+|z|)^k |F_hat(z) - Phi(z)| and a maximising z.

    Candidates: both one-sided limits at every atom, a uniform grid on
    [min - 1, max + 1], and the smooth tail maximisers beyond the sample
    range (for every weight order up to ``k`` so the result is monotone in k).
    """
    if k < 0 or int(k) != k:
        raise ValueError("k must be a nonnegative integer")
    k = int(k)
    x, left, right = _as_law(data, probs)
    c = ndtr(x)
    wt = (1.0 + np.abs(x)) ** k
    d_right = wt * (right - c)
    d_left = wt * (c - left)
    i_r, i_l = int(np.argmax(d_right)), int(np.argmax(d_left))
    best, arg = float(d_right[i_r]), float(x[i_r])
    if d_left[i_l] > best:
        best, arg = float(d_left[i_l]), float(x[i_l])
    if k == 0:
        return best, arg

    cand = []
    if grid:
        cand.append(np.linspace(x[0] - 1.0, x[-1] + 1.0, int(grid)))
    for kk in range(1, k + 1):
        cand.append(np.array([_tail_argmax(kk, x[-1], True), _tail_argmax(kk, x[0], False)]))
    z = np.concatenate(cand)
    fz = _ecdf_at(x, right, z)
    vals = (1.0 + np.abs(z)) ** k * np.abs(fz - ndtr(z))
    j = int(np.argmax(vals))
    if vals[j] > best:
        best, arg = float(vals[j]), float(z[j])
    return best, arg


def ks_report(data, ks=(1, 2, 3), probs=None, delta=1e-3, grid=DEFAULT_GRID):
    uniform = ks_distance(data, probs)
    weighted, argmax = {}, {}
    for k in ks:
        weighted[k], argmax[k] = weighted_ks(data, k, probs=probs, grid=grid)
    n = data.n_samples if isinstance(data, SampleBatch) else np.size(data)
    band = dkw_band(n, delta) if probs is None else 0.0
    return KsReport(uniform=uniform, weighted=weighted, argmax_z=argmax, dkw_band=band)


def tail_prob(data, z, two_sided=False):
    """Fraction of samples above z, or with |x| >= z when two-sided."""
    x = data.values if isinstance(data, SampleBatch) else np.asarray(data, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    if two_sided:
        return float(np.count_nonzero(np.abs(x) >= z) / x.size)
    return float(np.count_nonzero(x > z) / x.size)


def sample_moment(data, order):
    """Mean of x**order with compensated (fsum) accumulation."""
    if order < 1 or int(order) != order:
        raise ValueError("order must be a positive integer")
    x = data.values if isinstance(data, SampleBatch) else np.asarray(data, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    return math.fsum(x ** int(order)) / x.size


def moment_stderr(data, order):
    x = data.values if isinstance(data, SampleBatch) else np.asarray(data, dtype=float)
    return float(np.std(x ** int(order), ddof=1) / math.sqrt(x.size))


def dkw_band(n_samples, delta):
    """Half-width sqrt(ln(2/delta) / (2n)) of the DKW confidence band."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return math.sqrt(math.log(2.0 / delta) / (2.0 * n_samples))


def fit_rate(points):
    """Least-squares line through (log n, log d)."""
    pts = [(float(n), float(d)) for n, d in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if any(n <= 0 or d <= 0 for n, d in pts):
        raise ValueError("points must be positive")
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return RateFit(slope=float(slope), intercept=float(intercept), r_squared=min(1.0, max(0.0, r2)))
