"""Replica-symmetric fixed point of the Ising perceptron and the capacity alpha*.

The order parameters solve q = P(psi), psi = R(q, alpha) with

    P(psi)     = E tanh(sqrt(psi) Z)^2,
    R(q, alpha) = alpha E F_q(sqrt(q) Z)^2,   F_q(x) = ee((kappa-x)/s)/s,  s = sqrt(1-q),

and the capacity is the root in alpha of the free entropy G*(alpha) evaluated
at that fixed point.  The certified constants below bracket q*, psi* and
alpha* at kappa = 0; ``check_constants`` re-derives every inequality that
makes the brackets valid.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .envelopes import Interval, even_decreasing
from .quadrature import BoundBracket, adaptive_gk, integrate_bracket
from .scalar_kernels import ee, ee_deriv, log_Phibar, phi, binary_entropy

ZMAX = 10.0
TOL = 1e-14


@dataclass(frozen=True)
class Constants:
    """Certified brackets for (alpha*, q*, psi*) at kappa = 0."""

    alpha_lb: float = 0.833078599
    alpha_ub: float = 0.833078600
    q_lb: float = 0.56394907949
    q_lu: float = 0.56394907950
    q_ul: float = 0.56394908029
    q_ub: float = 0.56394908030
    psi_lb: float = 2.5763513100
    psi_lu: float = 2.5763513103
    psi_ul: float = 2.5763513221
    psi_ub: float = 2.5763513224

    def __post_init__(self):
        if not (self.q_lb < self.q_lu < self.q_ul < self.q_ub):
            raise ValueError("q constants out of order")
        if not (self.psi_lb < self.psi_lu < self.psi_ul < self.psi_ub):
            raise ValueError("psi constants out of order")
        if not self.alpha_lb < self.alpha_ub:
            raise ValueError("alpha constants out of order")

    @property
    def gamma_lb(self):
        return gamma_of_q(self.q_lb)

    @property
    def gamma_ub(self):
        return gamma_of_q(self.q_ub)

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


CONSTANTS = Constants()


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    kappa: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        if not math.isfinite(self.kappa):
            raise ValueError("kappa must be finite")


def gamma_of_q(q):
    q = np.asarray(q, dtype=float)
    out = np.sqrt(q / (1.0 - q))
    return float(out) if out.ndim == 0 else out


def xi_qz(q, kappa, z):
    return (kappa - np.sqrt(q) * z) / np.sqrt(1.0 - q)


def zeta_qz(q, kappa, z):
    return (kappa - z / np.sqrt(q)) / np.sqrt(1.0 - q)


def F_q(q, kappa, x):
    s = np.sqrt(1.0 - q)
    return np.asarray(ee((kappa - np.asarray(x)) / s)) / s


def _col(a):
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _gauss(fz, tol=TOL, zmax=ZMAX):
    """Integral of fz(z) phi(z) over |z| <= zmax; fz may return (k, n)."""
    val, _ = adaptive_gk(lambda z: np.asarray(fz(z)) * np.asarray(phi(z)), -zmax, zmax, tol)
    return val


def _scalar_or(a, like):
    return float(a) if np.ndim(like) == 0 else np.asarray(a)


def _log2cosh(x):
    a = np.abs(x)
    return a + np.log1p(np.exp(-2.0 * a))


def P_of_psi(psi, tol=TOL):
    """E tanh(sqrt(psi) Z)^2; accepts an array of psi."""
    psi_arr = np.asarray(psi, dtype=float)
    if np.any(psi_arr < 0):
        raise ValueError("psi must be nonnegative")
    r = _col(np.sqrt(np.atleast_1d(psi_arr)))
    out = _gauss(lambda z: np.tanh(r * z) ** 2, tol)
    return _scalar_or(np.asarray(out).reshape(psi_arr.shape), psi)


def P_prime(psi, tol=TOL):
    """dP/dpsi = E (2 - cosh(2x)) / cosh(x)^4 with x = sqrt(psi) Z."""
    psi_arr = np.asarray(psi, dtype=float)
    r = _col(np.sqrt(np.atleast_1d(psi_arr)))

    def f(z):
        x = r * z
        sech = 1.0 / np.cosh(x)
        return (2.0 - np.cosh(2.0 * x)) * sech ** 4

    out = _gauss(f, tol)
    return _scalar_or(np.asarray(out).reshape(psi_arr.shape), psi)


def _check_q(q):
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q >= 1)):
        raise ValueError("q must lie in [0, 1)")
    return q


def R_of_q(q, p, tol=TOL):
    """alpha E F_q(sqrt(q) Z)^2; accepts an array of q."""
    q_arr = _check_q(q)
    qc = _col(np.atleast_1d(q_arr))
    out = _gauss(lambda z: F_q(qc, p.kappa, np.sqrt(qc) * z) ** 2, tol)
    return _scalar_or(p.alpha * np.asarray(out).reshape(q_arr.shape), q)


def dR_dq(q, p, tol=TOL):
    """R/(1-q) + alpha/(1-q)^2 E ee(xi) ee'(xi) zeta."""
    q_arr = _check_q(q)
    qc = _col(np.atleast_1d(q_arr))

    def f(z):
        xi = xi_qz(qc, p.kappa, z)
        return np.asarray(ee(xi)) * np.asarray(ee_deriv(xi, 1)) * zeta_qz(qc, p.kappa, z)

    second = p.alpha * np.asarray(_gauss(f, tol)).reshape(q_arr.shape) / (1.0 - q_arr) ** 2
    out = np.asarray(R_of_q(q_arr, p, tol)) / (1.0 - q_arr) + second
    return _scalar_or(out, q)


def composed_slope(q, p, tol=TOL):
    """d/dq P(R(q, alpha))."""
    return _scalar_or(np.asarray(P_prime(R_of_q(q, p, tol), tol)) * np.asarray(dR_dq(q, p, tol)), q)


def intbyparts_I(q, p, tol=TOL):
    """alpha E ee(xi) zeta; equals psi (1-q) at the fixed point."""
    return p.alpha * _gauss(lambda z: np.asarray(ee(xi_qz(q, p.kappa, z))) * zeta_qz(q, p.kappa, z), tol)


def g_surface(p, q, psi, tol=TOL):
    """Replica free entropy G(alpha, q, psi)."""
    _check_q(q)
    if psi < 0:
        raise ValueError("psi must be nonnegative")
    r = math.sqrt(psi)
    ent = _gauss(lambda z: _log2cosh(r * z), tol)
    energy = _gauss(lambda z: np.asarray(log_Phibar(xi_qz(q, p.kappa, z))), tol)
    return -psi * (1.0 - q) / 2.0 + ent + p.alpha * energy


@dataclass(frozen=True)
class SaddlePoint:
    params: ModelParams
    q_star: float
    psi_star: float
    at_slope: float
    g_star: float
    gamma: float
    certified: bool = True
    residual: float = 0.0

    @property
    def alpha(self):
        return self.params.alpha

    @property
    def kappa(self):
        return self.params.kappa


class SaddleError(RuntimeError):
    pass


def _fixed_point_map(q, p, tol):
    return P_of_psi(R_of_q(q, p, tol), tol)


def _bisect(fun, a, b, fa, fb, xtol):
    # fun decreasing through zero on [a, b] with fa > 0 > fb
    while b - a > xtol:
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        fm = fun(m)
        if fm > 0:
            a, fa = m, fm
        elif fm < 0:
            b, fb = m, fm
        else:
            return m, m
    return a, b


def solve_saddle(p, tol=TOL, xtol=1e-15, slope_grid=512, constants=CONSTANTS):
    """Fixed point of q -> P(R(q, alpha)).

    Inside the certified alpha range the root is bisected on (q_lb, q_ub).
    Otherwise a damped iteration locates it, a bracket is grown around it and
    the result is marked uncertified.
    """
    fun = lambda q: _fixed_point_map(q, p, tol) - q
    certified = p.kappa == 0.0 and constants.alpha_lb <= p.alpha <= constants.alpha_ub
    a, b = constants.q_lb, constants.q_ub
    fa, fb = (fun(a), fun(b)) if certified else (None, None)
    if certified and not (fa > 0 > fb):
        raise SaddleError(f"no sign change of P(R(q))-q on ({a}, {b}) at alpha={p.alpha}")
    if not certified:
        q, damp = 0.5, 1.0
        prev_step = None
        for _ in range(2000):
            step = _fixed_point_map(q, p, tol) - q
            if prev_step is not None and step * prev_step < 0:
                damp *= 0.5
            q = min(max(q + damp * step, 1e-12), 1 - 1e-12)
            if abs(step) < 1e-7:
                break
            prev_step = step
        else:
            raise SaddleError("damped fixed-point iteration did not settle")
        width = 1e-6
        for _ in range(40):
            a, b = max(q - width, 1e-14), min(q + width, 1 - 1e-14)
            fa, fb = fun(a), fun(b)
            if fa > 0 > fb:
                break
            width *= 4
        else:
            raise SaddleError("could not bracket the fixed point")
    lo, hi = _bisect(fun, a, b, fa, fb, xtol)
    q_star = 0.5 * (lo + hi)
    psi_star = R_of_q(q_star, p, tol)
    residual = abs(P_of_psi(psi_star, tol) - q_star)
    if slope_grid and slope_grid > 1:
        if certified:
            grid = np.linspace(constants.q_lb, constants.q_ub, slope_grid)
        else:
            grid = np.linspace(q_star - 1e-4, q_star + 1e-4, slope_grid)
        at_slope = float(np.max(composed_slope(grid, p, tol)))
    else:
        at_slope = composed_slope(q_star, p, tol)
    g = g_surface(p, q_star, psi_star, tol)
    return SaddlePoint(p, q_star, psi_star, at_slope, g, gamma_of_q(q_star), certified, residual)


def h_star(sp, tol=TOL):
    """-psi(1-q) + E log(2 cosh(sqrt(psi) Z))."""
    r = math.sqrt(sp.psi_star)
    return -sp.psi_star * (1.0 - sp.q_star) + _gauss(lambda z: _log2cosh(r * z), tol)


def h_star_entropy(sp, tol=TOL):
    """Same quantity written as E H((1 + tanh(sqrt(psi) Z))/2)."""
    r = math.sqrt(sp.psi_star)
    return _gauss(lambda z: np.asarray(binary_entropy(0.5 * (1.0 + np.tanh(r * z)))), tol)


def p_star(sp, tol=TOL):
    """psi(1-q)/2 + alpha E log Phibar(xi_{q,Z})."""
    q = sp.q_star
    energy = _gauss(lambda z: np.asarray(log_Phibar(xi_qz(q, sp.kappa, z))), tol)
    return sp.psi_star * (1.0 - q) / 2.0 + sp.alpha * energy


def g_star(alpha, kappa=0.0, tol=TOL):
    return solve_saddle(ModelParams(alpha, kappa), tol, slope_grid=0).g_star


def alpha_star(constants=CONSTANTS, width=1e-12, tol=TOL):
    """Bisect alpha -> G*(alpha) inside the certified alpha bracket."""
    a, b = constants.alpha_lb, constants.alpha_ub
    ga, gb = g_star(a, tol=tol), g_star(b, tol=tol)
    if not ga > 0 > gb:
        raise SaddleError(f"G* does not change sign on [{a}, {b}]: {ga}, {gb}")
    while b - a > width:
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        gm = g_star(m, tol=tol)
        if gm > 0:
            a, ga = m, gm
        elif gm < 0:
            b, gb = m, gm
        else:
            a = b = m
            break
    return BoundBracket(a, b, 0.0, {"g_star_at_lo": ga, "g_star_at_hi": gb})


# ---------------------------------------------------------------------------
# Bracketed re-verification of the certified constants


@dataclass
class Check:
    name: str
    bracket: BoundBracket
    relation: str  # "<" or ">"
    threshold: float
    passed: bool = field(init=False)

    def __post_init__(self):
        if self.relation == "<":
            self.passed = self.bracket.hi < self.threshold
        elif self.relation == ">":
            self.passed = self.bracket.lo > self.threshold
        else:
            raise ValueError(self.relation)

    def as_dict(self):
        return {"name": self.name, "relation": self.relation, "threshold": self.threshold,
                "bracket": self.bracket.as_dict(), "pass": self.passed}


def _point_bracket(value, tol, eps_rig, tails=None):
    tails = dict(tails or {})
    budget = tol + eps_rig + math.fsum(tails.values())
    comps = {"quadrature": tol, "eps_rig": eps_rig, **tails}
    return BoundBracket(value - budget, value + budget, budget, comps)


def _R_trunc(q, alpha, kappa, tol):
    # alpha times the integral over |z| <= 10, as in the mapping argument
    return alpha * _gauss(lambda z: F_q(q, kappa, np.sqrt(q) * z) ** 2, tol, zmax=10.0)


def R_tail_bound(q, alpha):
    """Closed-form bound on the |z| >= 10 part of R, using ee(x) <= 1 + |x|."""
    from .scalar_kernels import Phibar
    t, d = Phibar(10.0), phi(10.0)
    return 2 * alpha / (1 - q) * (t + 2 * math.sqrt(q) * d / math.sqrt(1 - q)
                                   + q * (10 * d + t) / (1 - q))


def _P_bracket(psi_lo, psi_hi, tol, eps_rig):
    lo = P_of_psi(psi_lo, tol) - tol - eps_rig
    hi = P_of_psi(psi_hi, tol) + tol + eps_rig
    return lo, hi


def check_constants(c=CONSTANTS, kappa=0.0, tol=TOL, eps_rig=1e-14):
    """Re-verify the inequalities behind the certified constants.

    Returns a list of ``Check`` records.  The margins here are of order
    1e-10 to 1e-13, so the rigour allowance defaults to 1e-14.
    """
    checks = []
    tail = R_tail_bound(c.q_ub, c.alpha_ub)
    # mapping of R: lower bounds drop the tail, upper bounds add it
    for q, alpha, psi_lo, psi_hi, tag in ((c.q_lb, c.alpha_lb, c.psi_lb, None, "lb"),
                                          (c.q_lu, c.alpha_lb, None, c.psi_lu, "lu"),
                                          (c.q_ul, c.alpha_ub, c.psi_ul, None, "ul"),
                                          (c.q_ub, c.alpha_ub, None, c.psi_ub, "ub")):
        val = _R_trunc(q, alpha, kappa, tol)
        if psi_lo is not None:
            b = _point_bracket(val, tol, eps_rig)
            checks.append(Check(f"R_lb(q_{tag}) > psi", b, ">", psi_lo))
        else:
            b = _point_bracket(val, tol, eps_rig, {"tail_|z|>=10": 1e-20})
            checks.append(Check(f"R_ub(q_{tag}) < psi", b, "<", psi_hi))
    checks.append(Check("R tail beyond |z|=10", BoundBracket(tail, tail), "<", 1e-20))

    # slope bound: sup P' over the psi box times sup dR/dq over the (q, alpha) box
    dP = derivative_P_bracket(c, tol=tol, eps_rig=eps_rig)
    checks.append(Check("sup P'(psi) <= 0.08", dP, "<", 0.08 + 1e-300))
    dR = derivative_R_bracket(c, kappa, tol=tol, eps_rig=eps_rig)
    checks.append(Check("sup dR/dq <= 12", dR, "<", 12.0 + 1e-300))
    prod = BoundBracket(dP.lo * dR.lo, dP.hi * dR.hi, 0.0)
    checks.append(Check("slope bound product <= 0.96", prod, "<", 0.96 + 1e-300))

    # sign changes of P(R(q)) - q at the four q constants
    for q, alpha, want in ((c.q_lb, c.alpha_lb, ">"), (c.q_lu, c.alpha_lb, "<"),
                           (c.q_ul, c.alpha_ub, ">"), (c.q_ub, c.alpha_ub, "<")):
        r = _R_trunc(q, alpha, kappa, tol)
        r_lo, r_hi = r - tol - eps_rig, r + tol + eps_rig + 1e-20
        p_lo, p_hi = _P_bracket(r_lo, r_hi, tol, eps_rig)
        b = BoundBracket(p_lo - q, p_hi - q, 2 * (tol + eps_rig),
                         {"quadrature": 2 * tol, "eps_rig": 2 * eps_rig})
        checks.append(Check(f"P(R(q={q:.11f}, alpha={alpha:.9f})) - q {want} 0", b, want, 0.0))

    # the energy integral is decreasing in q on the box: I > 0 there
    Ib = intbyparts_bracket(c, kappa, tol=tol, eps_rig=eps_rig)
    checks.append(Check("I > 0 on the q box", Ib, ">", 0.0))

    # sign of G* at the two alpha constants
    checks.append(Check("G*(alpha_ub) < -1e-12", g_star_upper(c, kappa, tol, eps_rig), "<", -1e-12))
    checks.append(Check("G*(alpha_lb) > 1e-12", g_star_lower(c, kappa, tol, eps_rig), ">", 1e-12))

    # integration by parts identity at a solved saddle
    sp = solve_saddle(ModelParams(0.5 * (c.alpha_lb + c.alpha_ub), kappa), tol, slope_grid=0)
    ident = intbyparts_I(sp.q_star, sp.params, tol) - sp.psi_star * (1 - sp.q_star)
    checks.append(Check("|I - psi(1-q)| at the saddle", BoundBracket(abs(ident), abs(ident)), "<", 1e-9))
    return checks


def _env_tanh_family(c):
    return {"psi": Interval(c.psi_lb, c.psi_ub)}


def derivative_P_bracket(c=CONSTANTS, tol=TOL, eps_rig=1e-14):
    """Envelope of P'(psi) over the psi box.

    Both pieces 2/cosh(x)^4 and cosh(2x)/cosh(x)^4 are decreasing in |x|,
    so the interval evaluation picks the worst psi for each.
    """
    def f(params, z):
        x = params["psi"].sqrt() * z
        first = even_decreasing(lambda a: 2.0 / np.cosh(a) ** 4, x)
        second = even_decreasing(lambda a: np.cosh(2 * a) / np.cosh(a) ** 4, x)
        return first - second

    f.factors = ("psi",)
    sup_abs = 2.0 * 2.0 * float(np.asarray(_tail_mass(9.0)))
    return integrate_bracket(f, ((-9.0, 9.0),), _env_tanh_family(c), tol=tol, eps_rig=eps_rig,
                             tails={"tail_|z|>=9": max(sup_abs, 1e-18)}, weight="gaussian")


def _tail_mass(zmax):
    from .scalar_kernels import Phibar
    return 2.0 * Phibar(zmax)


def derivative_R_bracket(c=CONSTANTS, kappa=0.0, tol=TOL, eps_rig=1e-14):
    """Envelope of dR/dq over (q_lb, q_ub) x (alpha_lb, alpha_ub)."""
    def f(params, z):
        q, alpha = params["q"], params["alpha"]
        sq = q.sqrt()
        s = (1.0 - q).sqrt()
        # xi = (kappa - sqrt(q) z)/s and zeta = (kappa - z/sqrt(q))/s
        xi = (kappa - sq * z) / s
        zeta = (kappa - z / sq) / s
        e = xi.map_inc(lambda x: np.asarray(ee(x)))
        e1 = xi.map_inc(lambda x: np.asarray(ee_deriv(x, 1)))
        fsq = xi.map_inc(lambda x: np.asarray(ee(x)) ** 2)
        one_minus_q = 1.0 - q
        first = alpha * fsq / (one_minus_q * one_minus_q)
        second = alpha * e * e1 * zeta / (one_minus_q * one_minus_q)
        return first + second

    f.factors = ("q", "alpha")
    table = {"q": (c.q_lb, c.q_ub), "alpha": (c.alpha_lb, c.alpha_ub)}
    return integrate_bracket(f, ((-10.0, 10.0),), table, tol=tol, eps_rig=eps_rig,
                             tails={"tail_|z|>=10": 1e-15}, weight="gaussian")


def intbyparts_bracket(c=CONSTANTS, kappa=0.0, tol=TOL, eps_rig=1e-14):
    """Envelope of alpha E ee(xi) zeta over the (q, alpha) box."""
    def f(params, z):
        q, alpha = params["q"], params["alpha"]
        s = (1.0 - q).sqrt()
        xi = (kappa - q.sqrt() * z) / s
        zeta = (kappa - z / q.sqrt()) / s
        return alpha * xi.map_inc(lambda x: np.asarray(ee(x))) * zeta

    f.factors = ("q", "alpha")
    table = {"q": (c.q_lb, c.q_ub), "alpha": (c.alpha_lb, c.alpha_ub)}
    return integrate_bracket(f, ((-10.0, 10.0),), table, tol=tol, eps_rig=eps_rig,
                             tails={"tail_|z|>=10": 1e-15}, weight="gaussian")


def _g_bound(psi_quad, psi_ent, q_quad, q_energy, alpha, kappa, tol, eps_rig):
    r = math.sqrt(psi_ent)
    ent = _gauss(lambda z: _log2cosh(r * z), tol)
    energy = _gauss(lambda z: np.asarray(log_Phibar(xi_qz(q_energy, kappa, z))), tol)
    return -psi_quad * (1.0 - q_quad) / 2.0 + ent + alpha * energy


def g_star_upper(c=CONSTANTS, kappa=0.0, tol=TOL, eps_rig=1e-14):
    """Upper bound on G*(alpha_ub) from the fixed-point box at alpha_ub.

    -psi(1-q)/2 is largest at (psi_ul, q_ub); the cosh term increases in psi;
    the energy integral decreases in q because its q-derivative is -I/(2(1-q))
    with I > 0 on the box.
    """
    val = _g_bound(c.psi_ul, c.psi_ub, c.q_ub, c.q_ul, c.alpha_ub, kappa, tol, eps_rig)
    return _point_bracket(val, 3 * tol, eps_rig, {"tail_|z|>=10": 1e-15})


def g_star_lower(c=CONSTANTS, kappa=0.0, tol=TOL, eps_rig=1e-14):
    """Lower bound on G*(alpha_lb) from the fixed-point box at alpha_lb."""
    val = _g_bound(c.psi_lu, c.psi_lb, c.q_lb, c.q_lu, c.alpha_lb, kappa, tol, eps_rig)
    return _point_bracket(val, 3 * tol, eps_rig, {"tail_|z|>=10": 1e-15})
