"""Standard normal toolkit and the Kolmogorov Stein kernel.

The solution of ``f'(w) - w f(w) = 1{w <= z} - Phi(z)`` involves ratios
like ``Phi(w) / p(w)`` that overflow for ``|w| > 37``. Everything below goes
through the scaled Mills ratio ``M(x) = (1 - Phi(x)) / p(x)``, evaluated with
``erfcx`` for ``x >= 0`` only.

Functions accept scalars or arrays and return the same shape.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy.special import erfcx, ndtr

SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)


class JumpPointError(ValueError):
    """Raised when the Stein derivative is requested exactly at its jump."""

    def __init__(self, z, left, right):
        self.z = z
        self.left = left
        self.right = right
        super().__init__(
            f"f'_z has a jump at w = z = {z!r}: left limit {left!r}, right limit {right!r};"
            " pass side='left' or side='right'"
        )


@dataclass(frozen=True)
class SteinEval:
    z: float
    w: float
    f: float
    f_prime: float


@dataclass(frozen=True)
class LemmaConstants:
    k: int
    c1: float
    c2: float

    def holds(self, z):
        """Check ``min(1, c1/|z|^(2k)) <= c2/(1+|z|)^(2k)`` pointwise."""
        z = np.abs(np.asarray(z, dtype=float))
        with np.errstate(divide="ignore"):
            lhs = np.minimum(1.0, self.c1 / z ** (2 * self.k))
        return lhs * (1.0 + z) ** (2 * self.k) <= self.c2 * (1.0 + 1e-12)


def _finite(*xs):
    for x in xs:
        if not np.all(np.isfinite(x)):
            raise ValueError("input must be finite")


def _out(x):
    return x.item() if np.ndim(x) == 0 else x


def std_normal_cdf(x):
    """Phi(x), absolute error below 1e-14."""
    x = np.asarray(x, dtype=float)
    _finite(x)
    return _out(ndtr(x))


def mills_ratio(x):
    """(1 - Phi(x)) / p(x) without forming either factor."""
    x = np.asarray(x, dtype=float)
    _finite(x)
    return _out(SQRT_HALF_PI * erfcx(x / math.sqrt(2.0)))


def mills_tail_bound(z):
    """Upper bound min(1/2, 1/z) exp(-z^2/2) on 1 - Phi(z), z > 0."""
    z = np.asarray(z, dtype=float)
    _finite(z)
    if np.any(z <= 0):
        raise ValueError("mills_tail_bound needs z > 0")
    return _out(np.minimum(0.5, 1.0 / z) * np.exp(-0.5 * z * z))


def _lower_branch(z, w):
    # f_z(w) for w <= z; each case only calls erfcx at nonnegative arguments
    neg = w <= 0
    out = np.empty(np.broadcast(z, w).shape)
    zb, wb = np.broadcast_arrays(z, w)
    if np.any(neg):
        wn, zn = wb[neg], zb[neg]
        out[neg] = SQRT_HALF_PI * erfcx(-wn / math.sqrt(2.0)) * ndtr(-zn)
    pos = ~neg
    if np.any(pos):
        wp, zp = wb[pos], zb[pos]
        out[pos] = (
            ndtr(wp)
            * SQRT_HALF_PI
            * erfcx(zp / math.sqrt(2.0))
            * np.exp(0.5 * (wp - zp) * (wp + zp))
        )
    return out


def _solution(z, w):
    z, w = np.broadcast_arrays(np.asarray(z, float), np.asarray(w, float))
    lower = w <= z
    out = np.empty(z.shape)
    if np.any(lower):
        out[lower] = _lower_branch(z[lower], w[lower])
    if np.any(~lower):
        # f_z(w) = f_{-z}(-w) maps the upper branch onto the lower one
        out[~lower] = _lower_branch(-z[~lower], -w[~lower])
    return out


def stein_solution(z, w):
    """The bounded solution f_z(w) of the Kolmogorov Stein equation."""
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    _finite(z, w)
    return _out(_solution(z, w))


def _lower_derivative(z, w):
    # (1 - Phi(z)) (1 + w Phi(w) / p(w)) for w <= z
    zb, wb = np.broadcast_arrays(z, w)
    out = np.empty(zb.shape)
    neg = wb <= 0
    if np.any(neg):
        wn, zn = wb[neg], zb[neg]
        out[neg] = ndtr(-zn) * (1.0 + wn * SQRT_HALF_PI * erfcx(-wn / math.sqrt(2.0)))
    pos = ~neg
    if np.any(pos):
        wp, zp = wb[pos], zb[pos]
        out[pos] = ndtr(-zp) + wp * ndtr(wp) * SQRT_HALF_PI * erfcx(
            zp / math.sqrt(2.0)
        ) * np.exp(0.5 * (wp - zp) * (wp + zp))
    return out


def _derivative(z, w, upper):
    z, w, upper = np.broadcast_arrays(z, w, upper)
    out = np.empty(z.shape)
    if np.any(~upper):
        out[~upper] = _lower_derivative(z[~upper], w[~upper])
    if np.any(upper):
        # f'_z(w) = -f'_{-z}(-w)
        out[upper] = -_lower_derivative(-z[upper], -w[upper])
    return out


def stein_derivative(z, w, side=None):
    """f'_z(w) for w != z.

    ``side='left'`` / ``'right'`` return the one-sided limits, which is the
    only way to evaluate at ``w == z``; otherwise the jump raises
    ``JumpPointError``.
    """
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    _finite(z, w)
    zb, wb = np.broadcast_arrays(z, w)
    if side is None:
        at_jump = zb == wb
        if np.any(at_jump):
            zj = float(zb[at_jump].flat[0])
            left = float(_derivative(np.array(zj), np.array(zj), np.array(False)))
            right = float(_derivative(np.array(zj), np.array(zj), np.array(True)))
            raise JumpPointError(zj, left, right)
        upper = wb > zb
    elif side == "left":
        upper = wb > zb
    elif side == "right":
        upper = wb >= zb
    else:
        raise ValueError(f"side must be None, 'left' or 'right', got {side!r}")
    return _out(_derivative(zb, wb, upper))


def stein_eval(z, w, side=None):
    z = float(z)
    w = float(w)
    return SteinEval(z=z, w=w, f=stein_solution(z, w), f_prime=stein_derivative(z, w, side=side))


def lemma_constant(k, c1):
    """Smallest c2 with min(1, c1/|z|^(2k)) <= c2 / (1+|z|)^(2k) for all z."""
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    if not (c1 > 0 and math.isfinite(c1)):
        raise ValueError("c1 must be positive and finite")
    k = int(k)
    return LemmaConstants(k=k, c1=float(c1), c2=(1.0 + c1 ** (1.0 / (2 * k))) ** (2 * k))


def improved_prefactor(z, tail_half, c=1.0):
    """c exp(-z^2/4) + sqrt(P(F > z/2)) for z > 0."""
    z = np.asarray(z, dtype=float)
    tail_half = np.asarray(tail_half, dtype=float)
    _finite(z, tail_half)
    if np.any(z <= 0):
        raise ValueError("z must be positive")
    if np.any((tail_half < 0) | (tail_half > 1)):
        raise ValueError("tail_half must lie in [0, 1]")
    if c <= 0:
        raise ValueError("c must be positive")
    return _out(c * np.exp(-0.25 * z * z) + np.sqrt(tail_half))
