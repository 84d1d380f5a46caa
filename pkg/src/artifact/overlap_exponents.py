"""Exponent functions of the pair (second-moment) computation.

Two configurations with overlap lambda are described per coordinate by a
field H = sqrt(psi) z, its magnetisation m = tanh H and a correlation excess
D.  The free parameter A > 0 (or tau = (A-1)/(A+1) in (-1, 1)) indexes the
optimal D_H(A); lambda = ell(A) is the resulting overlap.  All functions take
a solved ``SaddlePoint`` and evaluate at its (q*, psi*).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import entr, expit

from .quadrature import default_inner_top, integrate_gauss, integrate_inner_trunc
from .replica_saddle import h_star, h_star_entropy, p_star, xi_qz
from .scalar_kernels import ee, log_Phibar

ZMAX = 10.0
TOL_Z = 1e-13
BAND_SLACK = 1e-14
S_BRACKET = (-5.0, 5.0)


# ---------------------------------------------------------------------------
# Single-coordinate algebra


def _mags(H):
    """m, 1+m, 1-m and 1-m^2, the last three without cancellation."""
    H = np.asarray(H, dtype=float)
    one_plus = 2.0 * expit(2.0 * H)
    one_minus = 2.0 * expit(-2.0 * H)
    return np.tanh(H), one_plus, one_minus, one_plus * one_minus


def _delta(A, m, u):
    return np.sqrt(A * A * u + m * m)


def _check_A(A):
    A = np.asarray(A, dtype=float)
    if np.any(~(A > 0)):
        raise ValueError("A must be positive")
    return A


@dataclass(frozen=True)
class PairAlgebra:
    Delta: np.ndarray
    B: np.ndarray
    S: np.ndarray
    D: np.ndarray


def pair_algebra(H, A):
    """Delta, B_H(A), S_H(A) = B^{-sgn H} and D_H(A)."""
    A = _check_A(A)
    m, one_plus, one_minus, u = _mags(H)
    delta = _delta(A, m, u)
    # choose the form of B whose denominator does not cancel; np.where
    # evaluates both, so silence the discarded branch
    with np.errstate(divide="ignore", invalid="ignore"):
        B = np.where(m < 0, A * one_plus / (delta - m), (delta + m) / (A * one_minus))
    S = B ** (-np.sign(H))
    D = (A * A - 1.0) * u * u / (delta + 1.0) ** 2
    return PairAlgebra(*(np.asarray(v) if np.ndim(v) else float(v) for v in (delta, B, S, D)))


@dataclass(frozen=True)
class PairLaw:
    """Law of (sigma, sigma') on {-1,+1}^2 with equal marginals (1+m)/2."""

    H: float
    m: float
    p: float
    D: float
    cells: tuple  # (++, +-, -+, --)

    def __post_init__(self):
        c = np.asarray(self.cells)
        if np.any(c < 0) or abs(c.sum() - 1.0) > 1e-12:
            raise ValueError("cells do not form a probability vector")


def band(H):
    """Interval of D for which the pair table is nonnegative."""
    m, _, _, u = _mags(H)
    return -(1.0 - np.abs(m)) ** 2, u


def _cells_from_D(H, D):
    m, one_plus, one_minus, u = _mags(H)
    D = np.asarray(D, dtype=float)
    lo, hi = -(1.0 - np.abs(m)) ** 2, u
    if np.any((D < lo - BAND_SLACK) | (D > hi + BAND_SLACK)):
        raise ValueError("D outside the nonnegativity band")
    D = np.clip(D, lo, hi)
    return (0.25 * (one_plus ** 2 + D), 0.25 * (u - D), 0.25 * (u - D), 0.25 * (one_minus ** 2 + D))


def _cells_from_A(H, A):
    # closed forms that stay accurate at both ends of the band
    m, one_plus, one_minus, u = _mags(H)
    delta = _delta(A, m, u)
    with np.errstate(divide="ignore", invalid="ignore"):
        dm_plus = np.where(m >= 0, delta + m, A * A * u / (delta - m))
        dm_minus = np.where(m <= 0, delta - m, A * A * u / (delta + m))
    off = 0.5 * u / (delta + 1.0)
    return (0.5 * one_plus * dm_plus / (delta + 1.0), off, off,
            0.5 * one_minus * dm_minus / (delta + 1.0))


def pair_law(H, D):
    H = float(H)
    cells = tuple(float(c) for c in _cells_from_D(H, D))
    m = math.tanh(H)
    return PairLaw(H, m, (1.0 + m) / 2.0, float(D), cells)


def _entropy(cells):
    return sum(entr(np.maximum(c, 0.0)) for c in cells)


def gamma_entropy(H, D):
    """Shannon entropy (nats) of the pair table P_{H,D}."""
    out = _entropy(_cells_from_D(H, D))
    return float(out) if np.ndim(out) == 0 else out


def gamma_entropy_at(H, A):
    """Gamma(H, D_H(A)) evaluated from A directly."""
    _check_A(A)
    out = _entropy(_cells_from_A(H, A))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Overlap parametrisation


@dataclass(frozen=True)
class OverlapPoint:
    lam: float
    tau: float
    A: float

    @classmethod
    def from_tau(cls, tau, sp):
        A = A_of_tau(tau)
        return cls(ell(A, sp), float(tau), A)


def A_of_tau(tau):
    if not -1.0 < tau < 1.0:
        raise ValueError("tau must lie in (-1, 1)")
    return math.exp(2.0 * math.atanh(tau))


def tau_of_A(A):
    return (A - 1.0) / (A + 1.0)


def _zint(fz, tol=TOL_Z):
    return integrate_gauss(fz, -ZMAX, ZMAX, tol)


def _Acol(A):
    A = _check_A(A)
    return A.reshape(-1, 1), A.shape


def ell(A, sp, tol=TOL_Z):
    """Overlap ell(A) = E D_{sqrt(psi) Z}(A) / (1-q); vectorised over A."""
    Ac, shape = _Acol(A)
    r = math.sqrt(sp.psi_star)

    def f(z):
        m, _, _, u = _mags(r * z)
        delta = _delta(Ac, m, u)
        return (Ac * Ac - 1.0) * u * u / (delta + 1.0) ** 2

    out = np.asarray(_zint(f, tol)).reshape(shape) / (1.0 - sp.q_star)
    return float(out) if out.ndim == 0 else out


def ell_prime(A, sp, tol=TOL_Z):
    """d ell / dA = E 2A(1-m^2)^2 / ((1-q) Delta (Delta+1)^2)."""
    Ac, shape = _Acol(A)
    r = math.sqrt(sp.psi_star)

    def f(z):
        m, _, _, u = _mags(r * z)
        delta = _delta(Ac, m, u)
        return 2.0 * Ac * u * u / (delta * (delta + 1.0) ** 2)

    out = np.asarray(_zint(f, tol)).reshape(shape) / (1.0 - sp.q_star)
    return float(out) if out.ndim == 0 else out


def lambda_min(sp, tol=TOL_Z):
    """ell(0) = -E (1 - |tanh(sqrt(psi) Z)|)^2 / (1-q)."""
    r = math.sqrt(sp.psi_star)
    val = _zint(lambda z: (2.0 * expit(-2.0 * r * np.abs(z))) ** 2, tol)
    return -val / (1.0 - sp.q_star)


def ell_at_infinity(sp, tol=TOL_Z):
    """E (1 - tanh^2) / (1-q), equal to 1 at the fixed point."""
    r = math.sqrt(sp.psi_star)
    return _zint(lambda z: _mags(r * z)[3], tol) / (1.0 - sp.q_star)


def ell_inverse(lam, sp, tol=1e-12):
    """OverlapPoint with ell(A) = lam, by bracketing root search in tau."""
    lmin = lambda_min(sp)
    if not lmin < lam < 1.0:
        raise ValueError(f"lambda must lie in ({lmin:.6g}, 1), got {lam!r}")
    if lam == 0.0:
        return OverlapPoint(0.0, 0.0, 1.0)
    fun = lambda t: ell(A_of_tau(t), sp) - lam
    # ell is increasing; bracket on the side of tau = 0 matching the sign of lam
    a, b = (0.0, 0.5) if lam > 0 else (-0.5, 0.0)
    while fun(b) < 0:
        a, b = b, 0.5 * (b + 1.0)
        if 1.0 - b < 1e-15:
            raise ValueError("lambda too close to 1 to invert")
    while fun(a) > 0:
        a, b = 0.5 * (a - 1.0), a
        if a + 1.0 < 1e-15:
            raise ValueError("lambda too close to lambda_min to invert")
    tau = brentq(fun, a, b, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
    A = A_of_tau(tau)
    got = ell(A, sp)
    if abs(got - lam) > max(tol, 1e-10):
        raise RuntimeError(f"ell_inverse residual {abs(got - lam):.3g}")
    return OverlapPoint(float(lam), float(tau), A)


# ---------------------------------------------------------------------------
# Entropy exponent


def H_of_A(A, sp, h_star_value=None, tol=TOL_Z):
    """-2 H* + E Gamma(sqrt(psi) Z, D(A)); vectorised over A."""
    Ac, shape = _Acol(A)
    r = math.sqrt(sp.psi_star)
    hs = h_star_entropy(sp) if h_star_value is None else h_star_value
    val = np.asarray(_zint(lambda z: _entropy(_cells_from_A(r * z, Ac)), tol)).reshape(shape)
    out = -2.0 * hs + val
    return float(out) if out.ndim == 0 else out


def H_of_lambda(pt, sp, tol=TOL_Z):
    if pt.lam == 1.0:
        return -h_star(sp)
    return H_of_A(pt.A, sp, tol=tol)


def H_deriv(pt, sp, order):
    """First or second derivative of H(lambda)."""
    if order == 1:
        return -(1.0 - sp.q_star) * math.log(pt.A) / 2.0
    if order == 2:
        return -(1.0 - sp.q_star) / (2.0 * pt.A * ell_prime(pt.A, sp))
    raise ValueError("order must be 1 or 2")


# ---------------------------------------------------------------------------
# Energy exponents


def _s_scale(sp):
    return math.sqrt(sp.psi_star) * math.sqrt(1.0 - sp.q_star)


def I_s(lam, s, sp, tol=1e-11, form="auto"):
    """alpha E log Phibar((xi - lam nu)/sqrt(1-lam^2) - ee(xi) s / (sqrt(psi) sqrt(1-q))).

    nu is a standard Gaussian conditioned on nu >= xi.  ``form='gamma'`` takes
    xi = gamma z (kappa = 0 only), ``form='xi'`` takes xi = xi_{q,z}; they
    agree by the symmetry z -> -z.
    """
    if not -1.0 < lam < 1.0:
        raise ValueError("lambda must lie in (-1, 1)")
    if form == "auto":
        form = "gamma" if sp.kappa == 0.0 else "xi"
    q = sp.q_star
    if form == "gamma":
        if sp.kappa != 0.0:
            raise ValueError("the gamma form needs kappa = 0")
        xi_of_z = lambda z: sp.gamma * z
    elif form == "xi":
        xi_of_z = lambda z: xi_qz(q, sp.kappa, z)
    else:
        raise ValueError(f"unknown form {form!r}")
    root = math.sqrt(1.0 - lam * lam)
    shift = s / _s_scale(sp)

    def g(z, u):
        xi = xi_of_z(z)
        nu = xi + u
        return np.asarray(log_Phibar((xi - lam * nu) / root - np.asarray(ee(xi)) * shift))

    return sp.alpha * integrate_inner_trunc(g, xi_of_z, 0.0, default_inner_top, tol,
                                            -ZMAX + 1.0, ZMAX - 1.0)


def B_fn(lam, s, sp, tol=1e-11, I0=None):
    """s^2/2 - sqrt(psi(1-q)) sqrt((1-lam)/(1+lam)) s + I_s(lam) - I_0(lam)."""
    if s == 0.0:
        return 0.0
    base = I_s(lam, 0.0, sp, tol) if I0 is None else I0
    return (s * s / 2.0 - _s_scale(sp) * math.sqrt((1.0 - lam) / (1.0 + lam)) * s
            + I_s(lam, s, sp, tol) - base)


class EdgeError(RuntimeError):
    """The minimiser of B(lambda, .) sits on the edge of the search bracket."""


def A_fn(lam, sp, tol=1e-11, bracket=S_BRACKET, xatol=1e-7):
    """(inf_s B(lambda, s), argmin); B is convex in s."""
    if lam == 0.0:
        return 0.0, 0.0
    if lam == 1.0:
        return 0.0, 0.0
    I0 = I_s(lam, 0.0, sp, tol)
    fun = lambda s: B_fn(lam, s, sp, tol, I0)
    lo, hi = bracket
    for attempt in range(2):
        res = minimize_scalar(fun, bounds=(lo, hi), method="bounded",
                              options={"xatol": xatol})
        s_opt = float(res.x)
        edge = min(s_opt - lo, hi - s_opt) < 10 * xatol
        if not edge:
            # B(lam, 0) = 0 is always available
            return min(float(res.fun), 0.0), s_opt
        lo, hi = 2.0 * lo, 2.0 * hi
    raise EdgeError(f"minimiser of B({lam}, s) stays on the bracket edge ({s_opt})")


def P_of_lambda(lam, sp, tol=1e-11, I_zero=None):
    """-psi(1-q) lam/(1+lam) + I(lam) - I(0); closed form at lam = 1."""
    if lam == 1.0:
        return -p_star(sp)
    if lam == 0.0:
        return 0.0
    base = I_s(0.0, 0.0, sp, tol) if I_zero is None else I_zero
    return (-sp.psi_star * (1.0 - sp.q_star) * lam / (1.0 + lam)
            + I_s(lam, 0.0, sp, tol) - base)


def Q_fn(lam, sp, tol=1e-11, s=0.2, I_zero=None):
    """Upper bound for P + A obtained by fixing s = 0.2."""
    if lam == 1.0:
        return s * s / 2.0 - p_star(sp)
    base = I_s(0.0, 0.0, sp, tol) if I_zero is None else I_zero
    return (s * s / 2.0 - s * _s_scale(sp) * math.sqrt((1.0 - lam) / (1.0 + lam))
            - sp.psi_star * (1.0 - sp.q_star) * lam / (1.0 + lam)
            + I_s(lam, s, sp, tol) - base)


@dataclass(frozen=True)
class ExponentSample:
    lam: float
    tau: float
    A: float
    H_val: float
    P_val: float
    A_val: float
    S_val: float
    s_opt: float
    S_P: float
    S_Q: float

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def exponent_sample(lam, sp, tol=1e-11, I_zero=None):
    lam = float(lam)
    base = I_s(0.0, 0.0, sp, tol) if I_zero is None else I_zero
    if lam == 1.0:
        hv, pv, av, s_opt = -h_star(sp), -p_star(sp), 0.0, 0.0
        qv = Q_fn(1.0, sp, tol)
        tau, A = 1.0, math.inf
    else:
        pt = ell_inverse(lam, sp)
        tau, A = pt.tau, pt.A
        hv = H_of_lambda(pt, sp)
        pv = P_of_lambda(lam, sp, tol, base)
        av, s_opt = A_fn(lam, sp, tol)
        qv = Q_fn(lam, sp, tol, I_zero=base)
    return ExponentSample(lam, tau, A, hv, pv, av, hv + pv + av, s_opt, hv + pv, hv + qv)


def S_curves(grid, sp, tol=1e-11):
    """ExponentSample for each lambda in grid, ordered by lambda."""
    base = I_s(0.0, 0.0, sp, tol)
    return [exponent_sample(lam, sp, tol, base) for lam in sorted(float(x) for x in grid)]
