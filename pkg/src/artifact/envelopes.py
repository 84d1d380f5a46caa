"""Monotone envelope arithmetic.

An ``Interval`` carries elementwise lower and upper envelopes of a quantity
that depends on parameters only known to lie in a box (q in [q_lb, q_ub],
lambda in [lam_lb, lam_ub], ...).  Each operation returns the tightest
envelope obtainable from the envelopes of its inputs, so a formula written
factor by factor automatically picks, for every factor, the endpoint that is
worst for the side being bounded.  This is how the verifier derives its
direction choices from monotonicity instead of transcribing them.

Rounding is ordinary floating point; the verifier adds an explicit
allowance on top.
"""

import numpy as np


def _arr(x):
    return np.asarray(x, dtype=float)


class Interval:
    __slots__ = ("lo", "hi")
    # make numpy arrays defer to the reflected Interval operators
    __array_ufunc__ = None

    def __init__(self, lo, hi=None):
        lo = _arr(lo)
        hi = lo if hi is None else _arr(hi)
        if np.any(lo > hi):
            raise ValueError("interval with lo > hi")
        self.lo = lo
        self.hi = hi

    @classmethod
    def point(cls, x):
        return cls(x, x)

    def __repr__(self):
        return f"Interval({self.lo!r}, {self.hi!r})"

    @property
    def width(self):
        return self.hi - self.lo

    def contains(self, x):
        x = _arr(x)
        return np.all((self.lo <= x) & (x <= self.hi))

    def pin(self, side):
        """Collapse to one endpoint ('lo' or 'hi')."""
        v = self.lo if side == "lo" else self.hi
        return Interval(v, v)

    # arithmetic
    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __add__(self, other):
        o = as_interval(other)
        return Interval(self.lo + o.lo, self.hi + o.hi)

    __radd__ = __add__

    def __sub__(self, other):
        o = as_interval(other)
        return Interval(self.lo - o.hi, self.hi - o.lo)

    def __rsub__(self, other):
        return as_interval(other) - self

    def __mul__(self, other):
        o = as_interval(other)
        p = (self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi)
        return Interval(np.minimum.reduce(p), np.maximum.reduce(p))

    __rmul__ = __mul__

    def reciprocal(self):
        if np.any((self.lo <= 0) & (self.hi >= 0)):
            raise ZeroDivisionError("reciprocal of an interval containing zero")
        return Interval(1.0 / self.hi, 1.0 / self.lo)

    def __truediv__(self, other):
        return self * as_interval(other).reciprocal()

    def __rtruediv__(self, other):
        return as_interval(other) * self.reciprocal()

    def __pow__(self, n):
        if not (isinstance(n, int) and n >= 0):
            raise ValueError("only nonnegative integer powers are supported")
        out = Interval(np.ones_like(self.lo), np.ones_like(self.hi))
        if n % 2 == 0:
            base, n = self.sq(), n // 2
        else:
            base = self
        for _ in range(n):
            out = out * base
        return out

    # monotone maps
    def map_inc(self, f):
        return _ordered(f(self.lo), f(self.hi))

    def map_dec(self, f):
        return _ordered(f(self.hi), f(self.lo))

    def sq(self):
        lo2, hi2 = self.lo ** 2, self.hi ** 2
        straddle = (self.lo < 0) & (self.hi > 0)
        lo = np.where(straddle, 0.0, np.minimum(lo2, hi2))
        return Interval(lo, np.maximum(lo2, hi2))

    def abs(self):
        a, b = np.abs(self.lo), np.abs(self.hi)
        straddle = (self.lo < 0) & (self.hi > 0)
        return Interval(np.where(straddle, 0.0, np.minimum(a, b)), np.maximum(a, b))

    def pos(self):
        return Interval(np.maximum(self.lo, 0.0), np.maximum(self.hi, 0.0))

    def exp(self):
        return self.map_inc(np.exp)

    def sqrt(self):
        return self.map_inc(np.sqrt)

    def log(self):
        return self.map_inc(np.log)


def _ordered(lo, hi):
    # a monotone map can still flip its endpoints at the roundoff level
    lo, hi = _arr(lo), _arr(hi)
    return Interval(np.minimum(lo, hi), np.maximum(lo, hi))


def as_interval(x):
    return x if isinstance(x, Interval) else Interval(x, x)


def even_decreasing(f, x):
    """Envelope of f(x) for f even and decreasing in |x| (e.g. a Gaussian density)."""
    a = as_interval(x).abs()
    return _ordered(f(a.hi), f(a.lo))


def hull(a, b):
    a, b = as_interval(a), as_interval(b)
    return Interval(np.minimum(a.lo, b.lo), np.maximum(a.hi, b.hi))
