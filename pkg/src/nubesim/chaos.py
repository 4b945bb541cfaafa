"""Quadratic variation of fractional Gaussian noise as a second-chaos element.

With unit-spaced fBm increments X (Toeplitz covariance Sigma) the statistic
F_n = sigma_n^{-1} sum(X_k^2 - 1) has cumulants

    kappa_m = 2^{m-1} (m-1)! tr(Sigma^m) / sigma_n^m,

so every diagnostic reduces to traces of powers of Sigma.
"""
from dataclasses import asdict, dataclass
from functools import lru_cache, partial
import math

import numpy as np
from scipy.linalg import cholesky, eigvalsh, matmul_toeplitz

from .rng import replicate, stream

CHOLESKY_MAX_N = 4096
EIG_CLIP = 1e-10


class NoCltError(ValueError):
    """Hurst index above 3/4, where F_n has a non-Gaussian limit."""


@dataclass(frozen=True)
class FbmSpec:
    hurst: float
    n: int

    def __post_init__(self):
        if not 0 < self.hurst < 1:
            raise ValueError(f"hurst must lie in (0, 1), got {self.hurst}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")


@dataclass(frozen=True)
class ChaosDiagnostics:
    sigma_n: float
    tr2: float
    tr4: float
    kappa4_excess: float
    fm_bound: float
    contraction_norm: float
    c_n: float
    rate_an: float

    def to_dict(self):
        return asdict(self)


def increment_cov(hurst, j):
    """rho_H(j) = ((j+1)^{2H} + |j-1|^{2H} - 2 j^{2H}) / 2."""
    if not 0 < hurst < 1:
        raise ValueError(f"hurst must lie in (0, 1), got {hurst}")
    j = np.abs(np.asarray(j, dtype=float))
    h2 = 2.0 * hurst
    out = 0.5 * ((j + 1.0) ** h2 + np.abs(j - 1.0) ** h2 - 2.0 * j**h2)
    return out.item() if out.ndim == 0 else out


def _row(spec):
    return np.asarray(increment_cov(spec.hurst, np.arange(spec.n)), dtype=float).reshape(-1)


@lru_cache(maxsize=32)
def _cholesky_factor(hurst, n):
    cov = _toeplitz(hurst, n)
    try:
        return cholesky(cov, lower=True)
    except np.linalg.LinAlgError as exc:
        smallest = float(eigvalsh(cov, subset_by_index=[0, 0])[0])
        raise np.linalg.LinAlgError(
            f"Cholesky failed for H={hurst}, n={n}; smallest eigenvalue {smallest:.3e}"
        ) from exc


@lru_cache(maxsize=32)
def _circulant_sqrt(hurst, n):
    """sqrt of the circulant-embedding eigenvalues, or None if not PSD."""
    r = np.asarray(increment_cov(hurst, np.arange(n + 1)), dtype=float).reshape(-1)
    c = np.concatenate([r, r[-2:0:-1]])
    lam = np.fft.fft(c).real
    if lam.min() < -EIG_CLIP:
        return None
    lam[lam < 0] = 0.0
    return np.sqrt(lam / c.size)


@lru_cache(maxsize=32)
def _spectrum(hurst, n):
    return eigvalsh(_toeplitz(hurst, n))


def _toeplitz(hurst, n):
    row = _row(FbmSpec(hurst, n))
    idx = np.arange(n)
    return row[np.abs(idx[:, None] - idx[None, :])]


def _draw_cholesky(gen, size, hurst, n):
    L = _cholesky_factor(hurst, n)
    return gen.standard_normal((size, n)) @ L.T


def _draw_circulant(gen, size, hurst, n):
    sq = _circulant_sqrt(hurst, n)
    m = sq.size
    out = np.empty((size, n))
    half = (size + 1) // 2
    z = gen.standard_normal((half, m)) + 1j * gen.standard_normal((half, m))
    w = np.fft.fft(sq * z, axis=1)[:, :n]
    both = np.concatenate([w.real, w.imag])
    out[:] = both[:size]
    return out


def sample_increments(spec, seed, size=None, method="auto"):
    """Centered Gaussian vectors with covariance rho_H(|k - l|).

    Cholesky for n <= 4096, circulant embedding beyond (falling back to
    Cholesky if the embedding is not positive semidefinite). Returns shape
    ``(n,)`` when ``size`` is None, else ``(size, n)``.
    """
    count = 1 if size is None else int(size)
    if method == "auto":
        method = "cholesky" if spec.n <= CHOLESKY_MAX_N else "circulant"
    if method == "circulant" and _circulant_sqrt(spec.hurst, spec.n) is None:
        method = "cholesky"
    gen = stream(seed, 0)
    if method == "cholesky":
        x = _draw_cholesky(gen, count, spec.hurst, spec.n)
    elif method == "circulant":
        x = _draw_circulant(gen, count, spec.hurst, spec.n)
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    return x[0] if size is None else x


def quad_var_statistic(x, sigma_n):
    """sigma_n^{-1} sum_k (x_k^2 - 1) along the last axis."""
    if sigma_n <= 0:
        raise ValueError("sigma_n must be positive")
    x = np.asarray(x, dtype=float)
    out = np.sum(x * x - 1.0, axis=-1) / sigma_n
    return out.item() if np.ndim(out) == 0 else out


def _draw_statistic(gen, count, hurst, n, sigma_n, method):
    if method == "spectral":
        lam = _spectrum(hurst, n)
        out = np.empty(count)
        step = max(1, 2_000_000 // n)
        for s in range(0, count, step):
            z = gen.standard_normal((min(step, count - s), n))
            out[s:s + len(z)] = ((z * z - 1.0) @ lam) / sigma_n
        return out
    draw = _draw_cholesky if method == "cholesky" else _draw_circulant
    out = np.empty(count)
    step = max(1, 2_000_000 // n)
    for s in range(0, count, step):
        x = draw(gen, min(step, count - s), hurst, n)
        out[s:s + len(x)] = quad_var_statistic(x, sigma_n)
    return out


def sample_statistic(spec, n_samples, seed, method="spectral", workers=1, chunk=50_000):
    """Monte Carlo draws of the standardized quadratic variation F_n.

    ``spectral`` uses F_n = sigma^{-1} sum lambda_i (Z_i^2 - 1) with the
    eigenvalues of Sigma, which has exactly the law of the path-based
    statistic at O(n) cost per draw. ``cholesky`` and ``circulant`` go
    through sampled increments.
    """
    if method == "auto":
        method = "cholesky" if spec.n <= CHOLESKY_MAX_N else "circulant"
    if method not in ("spectral", "cholesky", "circulant"):
        raise ValueError(f"unknown method {method!r}")
    if method == "spectral" and spec.n > CHOLESKY_MAX_N:
        method = "circulant"
    if method == "circulant" and _circulant_sqrt(spec.hurst, spec.n) is None:
        method = "cholesky"
    sigma = math.sqrt(2.0 * trace_sigma2(spec))
    fn = partial(_draw_statistic, hurst=spec.hurst, n=spec.n, sigma_n=sigma, method=method)
    return replicate(fn, n_samples, seed, chunk=chunk, workers=workers)


def trace_sigma2(spec):
    """tr(Sigma^2) = n rho_0^2 + 2 sum_j (n - j) rho_j^2."""
    row = _row(spec)
    n = spec.n
    weights = n - np.arange(n, dtype=float)
    terms = weights * row * row
    return math.fsum(terms[:1]) + 2.0 * math.fsum(terms[1:])


def trace_sigma4(spec, block=256):
    """tr(Sigma^4) = ||Sigma^2||_F^2 from Toeplitz products of column blocks.

    Sigma^2 is centrosymmetric, so column j and column n-1-j have equal norm
    and only half of the columns are formed.
    """
    row = _row(spec)
    n = spec.n
    half = (n + 1) // 2
    idx = np.arange(n)
    parts = []
    for a in range(0, half, block):
        cols = np.arange(a, min(half, a + block))
        blk = row[np.abs(idx[:, None] - cols[None, :])]
        sq = matmul_toeplitz(row, blk)
        norms = np.sum(sq * sq, axis=0)
        mult = np.where(cols == n - 1 - cols, 1.0, 2.0)
        parts.append(norms * mult)
    return math.fsum(np.concatenate(parts))


def berry_rate(hurst, n):
    """Kolmogorov rate A_n / c_H for the standardized quadratic variation."""
    if not 0 < hurst < 1:
        raise ValueError(f"hurst must lie in (0, 1), got {hurst}")
    if hurst > 0.75:
        raise NoCltError(f"H = {hurst} > 3/4: no central limit theorem, no Berry-Esseen rate")
    if n < 2:
        raise ValueError("n must be at least 2")
    if hurst < 0.625:
        return 1.0 / math.sqrt(n)
    if hurst == 0.625:
        return math.log(n) ** 1.5 / math.sqrt(n)
    if hurst < 0.75:
        return float(n) ** (4.0 * hurst - 3.0)
    return 1.0 / math.log(n)


def diagnostics(spec):
    tr2 = trace_sigma2(spec)
    tr4 = trace_sigma4(spec)
    var = 2.0 * tr2
    excess = 48.0 * tr4 / (var * var)
    contraction = math.sqrt(tr4) / var
    try:
        rate = berry_rate(spec.hurst, spec.n)
    except ValueError:
        rate = float("nan")
    return ChaosDiagnostics(
        sigma_n=math.sqrt(var),
        tr2=tr2,
        tr4=tr4,
        kappa4_excess=excess,
        fm_bound=math.sqrt(excess / 6.0),
        contraction_norm=contraction,
        c_n=1.0 / (8.0 * math.sqrt(contraction)),
        rate_an=rate,
    )


def hurst_estimator(s_n, n):
    """Plug-in Hurst estimate 1/2 - log(S_n) / (2 log n)."""
    if s_n <= 0:
        raise ValueError("s_n must be positive")
    if n < 2:
        raise ValueError("n must be at least 2")
    return 0.5 - math.log(s_n) / (2.0 * math.log(n))


def gauss_tail_bound(z, q, c):
    """2 exp(-min(z^2 / 2^{q/2}, (c z)^{2/q}) / 4), the chaos concentration bound."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0) or q < 1 or c <= 0:
        raise ValueError("need z > 0, q >= 1, c > 0")
    out = 2.0 * np.exp(-0.25 * np.minimum(z * z / 2.0 ** (q / 2.0), (c * z) ** (2.0 / q)))
    return out.item() if out.ndim == 0 else out


def fbm_nonuniform_bound(z, a_n, c=1.0):
    """(sqrt2 exp(-min(z^2/8, 2^{-13/4} a_n^{-1/2} z)/8) + c exp(-z^2/4)) a_n."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0) or a_n <= 0:
        raise ValueError("need z > 0 and a_n > 0")
    inner = np.minimum(z * z / 8.0, 2.0 ** (-13.0 / 4.0) * a_n ** -0.5 * z)
    out = (math.sqrt(2.0) * np.exp(-inner / 8.0) + c * np.exp(-0.25 * z * z)) * a_n
    return out.item() if out.ndim == 0 else out
