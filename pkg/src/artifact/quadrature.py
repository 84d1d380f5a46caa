"""Gaussian-weighted quadrature in plain and bracket modes.

Plain mode returns a best-effort value with an error estimate.  Bracket mode
integrates the lower and upper envelopes of an interval-valued integrand and
pushes the result outward by an explicit, additive budget:

    budget = quadrature tolerance + eps_rig + declared tail constants.

The adaptive rule is a vectorised 7/15 point Gauss-Kronrod pair with global
bisection.  Accepted panels are summed in left-to-right order, so the result
does not depend on the order in which panels were refined.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .envelopes import Interval
from .scalar_kernels import ee, phi

# Kronrod 15-point nodes and weights (positive half, last node is 0).
_XK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
# Embedded Gauss 7-point weights on nodes _XK[1], _XK[3], _XK[5], _XK[7].
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
W_KRONROD = np.concatenate([_WK[:-1], _WK[::-1]])
W_GAUSS = np.zeros(15)
for _i, _w in zip((1, 3, 5), _WG[:3]):
    W_GAUSS[_i] = _w
    W_GAUSS[14 - _i] = _w
W_GAUSS[7] = _WG[3]

_GL_T, _GL_W = np.polynomial.legendre.leggauss(20)


ROUNDOFF = 50 * np.finfo(float).eps


class QuadratureError(RuntimeError):
    """Adaptive refinement exhausted before reaching the requested tolerance."""


def adaptive_gk(f, a, b, tol, max_depth=40, max_panels=400000):
    """Integrate f over [a, b] to absolute error estimate <= tol.

    ``f`` maps an array of nodes of shape (n,) to values of shape (n,) or
    (k, n); in the latter case every component must meet the tolerance.
    Returns ``(value, error_estimate)`` with the leading shape of f's output.
    """
    if not b > a:
        raise ValueError("need a < b")
    if not tol > 0:
        raise ValueError("need tol > 0")
    total = b - a
    lo = np.array([a], dtype=float)
    hi = np.array([b], dtype=float)
    done_left, done_val, done_err = [], [], []
    for depth in range(max_depth + 1):
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        x = (mid[:, None] + half[:, None] * NODES[None, :]).ravel()
        y = np.asarray(f(x), dtype=float)
        y = y.reshape(y.shape[:-1] + (lo.size, 15))
        kron = (y * W_KRONROD).sum(axis=-1) * half
        gauss = (y * W_GAUSS).sum(axis=-1) * half
        err = np.abs(kron - gauss)
        if not np.all(np.isfinite(kron)):
            raise QuadratureError("non-finite integrand value")
        # a panel is also accepted once its error sits at the roundoff floor
        floor = ROUNDOFF * (np.abs(y) * W_KRONROD).sum(axis=-1) * half
        allowed = np.maximum(tol * (hi - lo) / total, floor)
        ok = np.all(err <= allowed, axis=tuple(range(err.ndim - 1)))
        done_left.append(lo[ok])
        done_val.append(kron[..., ok])
        done_err.append(err[..., ok])
        if np.all(ok):
            break
        ncomp = max(1, y.size // (15 * lo.size))
        if depth == max_depth or 2 * np.count_nonzero(~ok) * ncomp > max_panels:
            raise QuadratureError(
                f"no convergence on [{a}, {b}] to tol {tol:g} after {depth} levels"
            )
        lo_b, mid_b, hi_b = lo[~ok], mid[~ok], hi[~ok]
        lo = np.concatenate([lo_b, mid_b])
        hi = np.concatenate([mid_b, hi_b])
    left = np.concatenate(done_left)
    vals = np.concatenate(done_val, axis=-1)
    errs = np.concatenate(done_err, axis=-1)
    order = np.argsort(left, kind="stable")
    vals, errs = vals[..., order], errs[..., order]
    if vals.ndim == 1:
        return math.fsum(vals), float(errs.sum())
    value = np.array([math.fsum(v) for v in vals.reshape(-1, vals.shape[-1])])
    return value.reshape(vals.shape[:-1]), errs.sum(axis=-1)


def integrate_gauss(f, zlo=-9.0, zhi=9.0, tol=1e-13, return_error=False):
    """Adaptive value of the integral of f(z) phi(z) over [zlo, zhi]."""
    val, err = adaptive_gk(lambda z: np.asarray(f(z)) * np.asarray(phi(z)), zlo, zhi, tol)
    return (val, err) if return_error else val


def composite_gl(a, b, panels):
    """Nodes and weights of a composite 20-point Gauss-Legendre rule.

    ``a`` and ``b`` may be arrays of shape (n, 1) to get one rule per row.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    width = (b - a) / panels
    j = np.arange(panels)[:, None]
    t = (j + 0.5 * (_GL_T[None, :] + 1.0)).ravel()
    nodes = a + width * t
    weights = np.broadcast_to(0.5 * width * np.tile(_GL_W, panels), np.broadcast(nodes, width).shape)
    return nodes, weights


def _inner_refined(eval_rule, tol, panels=4, max_panels=512, strict=True):
    """Double the panel count until successive values agree within tol.

    With ``strict=False`` the last value is returned together with the
    remaining disagreement instead of raising.
    """
    prev = eval_rule(panels)
    while True:
        panels *= 2
        cur = eval_rule(panels)
        err = np.abs(cur - prev)
        if np.all(err <= tol):
            return cur, err
        if panels >= max_panels:
            if not strict:
                return cur, err
            raise QuadratureError(f"inner rule did not converge (max err {err.max():.3g})")
        prev = cur


def integrate_inner_trunc(g, xi_of_z, ulo=0.0, uhi=12.0, tol=1e-11, zlo=-9.0, zhi=9.0):
    """Integral over z of phi(z) times the integral over u in [ulo, uhi] of

        g(z, u) * phi(xi + u) / Phibar(xi),   xi = xi_of_z(z).

    ``uhi`` may be a callable of xi so the inner range can follow the bulk of
    the conditional density when xi is very negative.
    """
    inner_tol = tol / (2.0 * (zhi - zlo))

    def outer(z):
        xi = np.asarray(xi_of_z(z), dtype=float)[:, None]
        top = uhi(xi) if callable(uhi) else np.full_like(xi, float(uhi))
        mills = np.asarray(ee(xi))

        def rule(panels):
            u, w = composite_gl(ulo, top, panels)
            dens = mills * np.exp(-xi * u - 0.5 * u * u)
            return (np.asarray(g(z[:, None], u)) * dens * w).sum(axis=1)

        val, _ = _inner_refined(rule, inner_tol)
        return val * np.asarray(phi(z))

    val, _ = adaptive_gk(outer, zlo, zhi, tol / 2.0)
    return val


def default_inner_top(xi):
    """Inner range that covers the conditional density to far beyond 1e-20."""
    return np.maximum(12.0, -xi + 12.0)


@dataclass(frozen=True)
class BoundBracket:
    """Conservative two-sided bound with the allowance that was applied."""

    lo: float
    hi: float
    budget: float = 0.0
    components: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"bracket with lo > hi: {self.lo}, {self.hi}")
        if not self.budget >= 0:
            raise ValueError("negative budget")

    def contains(self, x):
        return self.lo <= x <= self.hi

    @property
    def mid(self):
        return 0.5 * (self.lo + self.hi)

    def __add__(self, other):
        if isinstance(other, BoundBracket):
            comps = dict(self.components)
            for k, v in other.components.items():
                comps[k] = comps.get(k, 0.0) + v
            return BoundBracket(self.lo + other.lo, self.hi + other.hi,
                                self.budget + other.budget, comps)
        return BoundBracket(self.lo + other, self.hi + other, self.budget, dict(self.components))

    __radd__ = __add__

    def __neg__(self):
        return BoundBracket(-self.hi, -self.lo, self.budget, dict(self.components))

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        """Multiply by a constant (budget scales with |c|)."""
        a, b = self.lo * c, self.hi * c
        comps = {k: abs(c) * v for k, v in self.components.items()}
        return BoundBracket(min(a, b), max(a, b), abs(c) * self.budget, comps)

    def as_dict(self):
        return {"lo": self.lo, "hi": self.hi, "budget": self.budget,
                "components": dict(self.components)}


def _check_table(f, direction_table):
    declared = tuple(getattr(f, "factors", ()))
    given = set(direction_table)
    missing = [k for k in declared if k not in given]
    extra = sorted(given - set(declared))
    if missing or extra:
        raise ValueError(f"direction table mismatch: missing {missing}, undeclared {extra}")
    params = {}
    for k, v in direction_table.items():
        if isinstance(v, Interval):
            params[k] = v
        else:
            lo, hi = v
            params[k] = Interval(lo, hi)
    return params


def integrate_bracket(f, domain, direction_table, *, tol=1e-10, eps_rig=1e-9,
                      tails=None, weight=None):
    """Outward-rounded bracket of an envelope integral.

    ``f(params, z)`` (one dimension) or ``f(params, z, u)`` (two dimensions)
    returns an Interval of integrand envelopes, where ``params`` maps each
    factor named in ``f.factors`` to the Interval given in the direction
    table.  ``domain`` is ((zlo, zhi),) or ((zlo, zhi), (ulo, uhi)).
    ``weight='gaussian'`` multiplies the integrand by phi(z).
    ``tails`` maps names to fixed tail constants added to the budget.
    """
    params = _check_table(f, direction_table)
    tails = dict(tails or {})
    if any(v < 0 for v in tails.values()):
        raise ValueError("tail constants must be nonnegative")
    (zlo, zhi), *rest = domain
    wfun = (lambda z: np.asarray(phi(z))) if weight == "gaussian" else (lambda z: 1.0)

    if not rest:
        def integrand(z):
            env = f(params, z)
            w = wfun(z)
            return np.stack([np.broadcast_to(env.lo * w, z.shape),
                             np.broadcast_to(env.hi * w, z.shape)])
        vals, _ = adaptive_gk(integrand, zlo, zhi, tol)
    else:
        (ulo, uhi), = rest
        inner_tol = tol / (2.0 * (zhi - zlo))
        # envelopes are only piecewise smooth; any inner disagreement left
        # after refinement is charged to the budget
        leftover = [0.0]

        def integrand(z):
            zc = z[:, None]

            def rule(panels):
                u, w = composite_gl(ulo, uhi, panels)
                env = f(params, zc, u[None, :])
                lo = np.broadcast_to(env.lo, (z.size, u.size))
                hi = np.broadcast_to(env.hi, (z.size, u.size))
                return np.stack([(lo * w).sum(axis=1), (hi * w).sum(axis=1)])

            val, err = _inner_refined(rule, inner_tol, max_panels=1024, strict=False)
            excess = np.max(np.maximum(err - inner_tol, 0.0) * np.abs(wfun(z)))
            leftover[0] = max(leftover[0], float(excess))
            return val * wfun(z)

        vals, _ = adaptive_gk(integrand, zlo, zhi, tol / 2.0)
        if leftover[0] > 0:
            tails["inner_refinement"] = 4.0 * leftover[0] * (zhi - zlo)

    budget = tol + eps_rig + math.fsum(tails.values())
    comps = {"quadrature": tol, "eps_rig": eps_rig}
    comps.update(tails)
    return BoundBracket(float(vals[0]) - budget, float(vals[1]) + budget, budget, comps)
