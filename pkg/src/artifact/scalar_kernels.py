"""Scalar special functions for Gaussian tails.

Everything here is vectorised over numpy arrays and returns plain floats for
scalar input.  The central object is the inverse Mills ratio

    ee(x) = phi(x) / Phibar(x),

the mean of a standard Gaussian conditioned to exceed ``x``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import entr, erfc, erfcx, log_ndtr

SQRT2 = np.sqrt(2.0)
SQRT_2PI = np.sqrt(2.0 * np.pi)
SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)

# Above this threshold ee is evaluated from a continued fraction.
CF_SWITCH = 30.0
CF_DEPTH = 60


def _out(a):
    a = np.asarray(a, dtype=float)
    return float(a) if a.ndim == 0 else a


def phi(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    return _out(np.exp(-0.5 * x * x) / SQRT_2PI)


def Phibar(x):
    """Upper Gaussian tail, via erfc so the relative accuracy survives large x."""
    x = np.asarray(x, dtype=float)
    return _out(0.5 * erfc(x / SQRT2))


def log_Phibar(x):
    """log Phibar(x), finite for all finite x."""
    x = np.asarray(x, dtype=float)
    return _out(log_ndtr(-x))


def _gap_cf(x):
    # ee(x) - x = 1/(x + 2/(x + 3/(x + ...))), valid and fast for large x
    t = np.array(x, dtype=float, copy=True)
    for k in range(CF_DEPTH, 1, -1):
        t = x + k / t
    return 1.0 / t


def ee(x):
    """Inverse Mills ratio phi(x)/Phibar(x)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    big = x >= CF_SWITCH
    small = ~big
    xs = x[small]
    with np.errstate(over="ignore"):
        ex = erfcx(xs / SQRT2)
    val = SQRT_2_OVER_PI / ex
    deep = ~np.isfinite(ex) | (xs < -20.0)
    if np.any(deep):
        xd = xs[deep]
        val[deep] = np.exp(-0.5 * xd * xd) / SQRT_2PI / (0.5 * erfc(xd / SQRT2))
    out[small] = val
    out[big] = x[big] + _gap_cf(x[big])
    return _out(out)


def ee_gap(x):
    """ee(x) - x, computed without cancellation for large x."""
    x = np.asarray(x, dtype=float)
    out = np.asarray(ee(x)) - x
    big = x >= CF_SWITCH
    out = np.where(big, _gap_cf(np.where(big, x, CF_SWITCH)), out)
    return _out(out)


def ee_derivs(x):
    """Return (ee, ee', ee'', ee''', ee'''') from the closed recurrences."""
    x = np.asarray(x, dtype=float)
    e0 = np.asarray(ee(x))
    gap = np.asarray(ee_gap(x))
    e1 = e0 * gap
    e2 = e0 * ((e0 + gap) * gap - 1.0)
    e3 = -2.0 * (1.0 - e1) * e1 + (e0 + gap) * e2
    e4 = e2 * (6.0 * e1 - 3.0) + e3 * (e0 + gap)
    return tuple(_out(v) for v in (e0, e1, e2, e3, e4))


def ee_deriv(x, order):
    """Derivative of ee of the given order (1 to 4)."""
    if order not in (1, 2, 3, 4):
        raise ValueError(f"order must be in 1..4, got {order!r}")
    return ee_derivs(x)[order]


@dataclass(frozen=True)
class TruncGaussMoments:
    """Moments of nu ~ N(0,1) conditioned on nu >= xi."""

    xi: float
    mean: float
    second: float
    abs_first: float
    abs_third: float


def trunc_moments(xi):
    xi = float(xi)
    mean = float(ee(xi))
    second = xi * mean + 1.0
    if xi >= 0.0:
        abs_first = mean
        abs_third = (2.0 + xi * xi) * mean
    else:
        tail = float(Phibar(xi))
        abs_first = (2.0 * phi(0.0) - phi(xi)) / tail
        abs_third = (4.0 * phi(0.0) - (xi * xi + 2.0) * phi(xi)) / tail
    return TruncGaussMoments(xi, mean, second, abs_first, abs_third)


def binary_entropy(p):
    """Shannon entropy (nats) of a Bernoulli(p) variable."""
    p = np.asarray(p, dtype=float)
    return _out(entr(p) + entr(1.0 - p))


def L(q, kappa, h):
    """h + sqrt(1-q) ee((kappa-h)/sqrt(1-q)), a bijection from R onto (kappa, inf)."""
    if not 0.0 <= q < 1.0:
        raise ValueError("q must lie in [0, 1)")
    s = np.sqrt(1.0 - q)
    h = np.asarray(h, dtype=float)
    # h + s*ee(u) with s*u = kappa - h, written to avoid cancellation as h -> -inf
    return _out(kappa + s * np.asarray(ee_gap((kappa - h) / s)))


def L_inverse(q, kappa, y, tol=1e-12, max_iter=400):
    """Solve L(q, kappa, h) = y by vectorised bisection."""
    if not 0.0 <= q < 1.0:
        raise ValueError("q must lie in [0, 1)")
    y = np.asarray(y, dtype=float)
    if np.any(~(y > kappa)):
        bad = np.flatnonzero(np.atleast_1d(~(y > kappa)))
        raise ValueError(f"no solution for y <= kappa at indices {bad.tolist()}")
    s2 = 1.0 - q
    hi = np.array(y, dtype=float, copy=True)
    # L(h) - kappa < s2/(kappa - h) for h < kappa, so this end lies below y
    lo = np.minimum(y, kappa) - s2 / (y - kappa) - 1.0
    yy = np.broadcast_to(y, hi.shape)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        val = np.asarray(L(q, kappa, mid))
        below = val < yy
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        h = 0.5 * (lo + hi)
        res = np.abs(np.asarray(L(q, kappa, h)) - yy)
        if np.all((res <= tol) | (hi - lo <= 4 * np.spacing(np.abs(h) + 1.0))):
            break
    h = 0.5 * (lo + hi)
    res = np.abs(np.asarray(L(q, kappa, h)) - yy)
    if np.any(res > tol):
        raise RuntimeError(f"L_inverse did not reach tolerance (max residual {res.max():.3g})")
    return _out(h)
