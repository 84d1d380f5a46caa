"""Grid-search verification that the pair exponent is negative away from 0 and 1.

The overlap axis is covered by cells [tau_lo, tau_hi] in the parametrisation
tau = (A-1)/(A+1).  On each cell every parameter (alpha, q, psi, gamma and
lambda) is only known to lie in an interval, and each integrand is evaluated
with ``Interval`` arithmetic so that the worst endpoint is chosen factor by
factor.  Integrals are taken over truncated domains; the mass outside them is
covered by fixed tail constants that are added to the budget of each cell.

Parts:
    A  value bounds: S_P < 0 on lambda in [0.2, 0.98], S_Q < 0 on [lambda_min, -0.125]
    B  first derivative of S_P has the sign opposite to lambda on
       [-0.125, -0.03] and [0.05, 0.2]
    C  second derivative of S_P is negative on [-0.03, 0.05]
    near one: S_P(lambda) < S_P(1) for lambda in [0.98, 1)
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .envelopes import Interval, as_interval
from .overlap_exponents import _cells_from_A, _entropy
from .quadrature import BoundBracket, integrate_bracket, integrate_gauss
from .replica_saddle import CONSTANTS, gamma_of_q
from .scalar_kernels import binary_entropy, ee, ee_deriv, log_Phibar, phi

TOL = 1e-10
EPS_RIG = 1e-9
THREADS_ENV = "ARTIFACT_THREADS"

# tail constants (mass outside the truncated integration domains)
TAIL_LAMBDA = 1e-15            # ell_in / ell_out truncation at |z| = 9
TAIL_ENTROPY = 1e-15           # entropy integral truncation at |z| = 9
TAIL_I0 = 1e-15                # I(0) truncation at |z| = 9
TAIL_DERIV_UB = 3e-6           # first derivative, regions 1 and 3, 0 <= lambda <= 0.95
TAIL_DERIV_LB = 1.1e-7         # first derivative, region 2, divided by sqrt(1 - L_ub)
TAIL_SECOND = 1e-6             # second derivative truncation, |lambda| <= 0.1
TAIL_ELLPRIME = 1e-15          # ell' truncation at |y| = 9
SANDWICH_GAP = 1.4e-11


# ---------------------------------------------------------------------------
# Grids, stored as the printed blocks: (a, b, step) expands to a, a+step, ... <= b


GRID_VALUE_POS = (
    (0.24, 0.284, 0.001), (0.285, 0.315, 0.002), (0.318, 0.342, 0.003),
    (0.346, 0.366, 0.004), (0.371, 0.386, 0.005), (0.392, 0.404, 0.006),
    [0.411, 0.418, 0.425, 0.433, 0.441],
    (0.45, 0.57, 0.01), (0.59, 0.67, 0.02), (0.7, 0.76, 0.03), (0.8, 0.94, 0.04),
    [0.95, 0.98, 0.99],
)
# magnitudes; the cells are (-t[i+1], -t[i])
GRID_VALUE_NEG = (
    (0.18, 0.209, 0.001), (0.21, 0.236, 0.002), (0.238, 0.268, 0.003),
    (0.271, 0.343, 0.004), (0.347, 0.419, 0.006), (0.425, 0.513, 0.008),
    (0.52, 0.77, 0.01),
    [0.78, 0.8, 0.82, 0.84, 0.86, 0.89, 0.93, 1.0],
)
GRID_DERIV_POS = (
    (0.06, 0.076, 0.001), (0.078, 0.098, 0.002), (0.101, 0.116, 0.003),
    (0.12, 0.14, 0.004), [0.145, 0.15, 0.156, 0.162, 0.168],
    (0.175, 0.21, 0.007), (0.21, 0.26, 0.01),
)
GRID_DERIV_NEG = (
    [0.03, 0.031, 0.032, 0.033, 0.034, 0.036, 0.038, 0.041, 0.045, 0.05, 0.056,
     0.063, 0.071, 0.081, 0.092, 0.104, 0.116, 0.128, 0.14, 0.15, 0.159, 0.166,
     0.172, 0.177, 0.18, 0.185, 0.19],
)
GRID_SECOND = (
    [-0.043, -0.039, -0.035, -0.03, -0.025, -0.019, -0.013, -0.007, 0.0,
     0.007, 0.015, 0.024, 0.033, 0.043, 0.054, 0.066, 0.078],
)


def _exact(x):
    return Fraction(repr(float(x)))


def expand_grid(blocks):
    """Concatenate the blocks into a strictly increasing knot vector.

    A block (a, b, step) is a, a+step, ..., up to and including b; steps are
    done in exact decimal arithmetic.  Repeated knots are dropped.
    """
    knots = []
    for blk in blocks:
        if isinstance(blk, tuple):
            a, b, step = (_exact(v) for v in blk)
            n = int((b - a) // step)
            vals = [float(a + j * step) for j in range(n + 1)]
        else:
            vals = [float(v) for v in blk]
        for v in vals:
            if knots and v == knots[-1]:
                continue
            if knots and v < knots[-1]:
                raise ValueError("grid blocks are not increasing")
            knots.append(v)
    return knots


def refine_knots(knots, k):
    """Split every cell into k equal pieces."""
    if k < 1:
        raise ValueError("refine factor must be >= 1")
    if k == 1:
        return list(knots)
    out = []
    for a, b in zip(knots[:-1], knots[1:]):
        out.extend(a + (b - a) * j / k for j in range(k))
    out.append(knots[-1])
    return out


@dataclass(frozen=True)
class GridSpec:
    part: str
    knots: tuple
    sign_regime: str

    def __post_init__(self):
        k = self.knots
        if any(b <= a for a, b in zip(k[:-1], k[1:])):
            raise ValueError("knots must be strictly increasing")
        if self.sign_regime == "nonneg" and k[0] < 0:
            raise ValueError("nonneg grid with a negative knot")
        if self.sign_regime == "nonpos" and k[-1] > 0:
            raise ValueError("nonpos grid with a positive knot")

    def cells(self):
        return list(zip(self.knots[:-1], self.knots[1:]))


def default_grids(refine=1):
    neg_value = sorted(-t for t in expand_grid(GRID_VALUE_NEG))
    neg_deriv = sorted(-t for t in expand_grid(GRID_DERIV_NEG))
    second = expand_grid(GRID_SECOND)
    mk = lambda part, knots, regime: GridSpec(part, tuple(refine_knots(knots, refine)), regime)
    return {
        "A_value_pos": mk("A_value", expand_grid(GRID_VALUE_POS), "nonneg"),
        "A_value_neg": mk("A_value", neg_value, "nonpos"),
        "B_first_deriv_pos": mk("B_first_deriv", expand_grid(GRID_DERIV_POS), "nonneg"),
        "B_first_deriv_neg": mk("B_first_deriv", neg_deriv, "nonpos"),
        # each cell of the second-derivative grid is single-signed
        "C_second_deriv_neg": mk("C_second_deriv", [t for t in second if t <= 0], "nonpos"),
        "C_second_deriv_pos": mk("C_second_deriv", [t for t in second if t >= 0], "nonneg"),
    }


# ---------------------------------------------------------------------------
# Parameter box


@dataclass(frozen=True)
class ParameterBox:
    """Intervals for (alpha, q, psi, gamma) in which the true values lie."""

    alpha: Interval
    q: Interval
    psi: Interval
    gamma: Interval

    @classmethod
    def from_constants(cls, c=CONSTANTS, psi_widen=0.0):
        return cls(Interval(c.alpha_lb, c.alpha_ub), Interval(c.q_lb, c.q_ub),
                   Interval(c.psi_lb - psi_widen, c.psi_ub + psi_widen),
                   Interval(gamma_of_q(c.q_lb), gamma_of_q(c.q_ub)))

    def table(self, **extra):
        t = {"alpha": self.alpha, "q": self.q, "psi": self.psi, "gamma": self.gamma}
        t.update(extra)
        return t

    def pinned(self, name, side):
        """Box with one parameter collapsed to an endpoint."""
        return replace(self, **{name: getattr(self, name).pin(side)})

    def scalars(self, name):
        iv = getattr(self, name)
        return float(iv.lo), float(iv.hi)


def A_of_tau(tau):
    if tau <= -1.0:
        return 0.0
    if tau >= 1.0:
        return math.inf
    return math.exp(2.0 * math.atanh(tau))


def _D(psi, z, A):
    m = np.tanh(math.sqrt(psi) * z)
    u = 1.0 / np.cosh(math.sqrt(psi) * z) ** 2
    delta = np.sqrt(A * A * u + m * m)
    return (A * A - 1.0) * u * u / (delta + 1.0) ** 2


@dataclass(frozen=True)
class Sandwich:
    tau: float
    A: float
    ell_in: float
    ell_out: float
    lam_lb: float
    lam_ub: float

    @property
    def gap(self):
        return abs(self.ell_out - self.ell_in)


def sandwich_at(tau, box, tol=1e-14):
    """ell_in and ell_out at A(tau) and the resulting lambda bounds."""
    A = A_of_tau(tau)
    if not math.isfinite(A):
        raise ValueError("tau = 1 is not an admissible knot")
    psi_lb, psi_ub = box.scalars("psi")
    q_lb, q_ub = box.scalars("q")
    base_in = integrate_gauss(lambda z: _D(psi_ub, z, A), -9.0, 9.0, tol)
    base_out = integrate_gauss(lambda z: _D(psi_lb, z, A), -9.0, 9.0, tol)
    sgn = 0.0 if A == 1.0 else math.copysign(1.0, A - 1.0)
    ell_in = base_in / (1.0 - q_lb)
    ell_out = base_out / (1.0 - q_ub) + sgn * TAIL_LAMBDA
    lo, hi = min(ell_in, ell_out), max(ell_in, ell_out)
    # quadrature allowance, pushed outward without crossing zero at A = 1
    lo, hi = lo - tol * (sgn <= 0), hi + tol * (sgn >= 0)
    if sgn > 0:
        lo = max(lo, 0.0)
    elif sgn < 0:
        hi = min(hi, 0.0)
    else:
        lo = hi = 0.0
    return Sandwich(float(tau), A, ell_in, ell_out, lo, hi)


@dataclass(frozen=True)
class LambdaBracket:
    """Envelopes over a cell; L is lambda^2 and c is sqrt((1-lambda)/(1+lambda))."""

    lam_lb: float
    lam_ub: float
    L_lb: float
    L_ub: float
    c_lb: float
    c_ub: float
    max_gap: float

    @property
    def lam(self):
        return Interval(self.lam_lb, self.lam_ub)

    def as_bracket(self):
        return BoundBracket(self.lam_lb, self.lam_ub, 0.0, {"sandwich_gap": self.max_gap})


class SandwichError(RuntimeError):
    pass


def lambda_sandwich(tau_lo, tau_hi, box=None, cache=None):
    """Lambda envelopes over tau in [tau_lo, tau_hi] (same-sign knots)."""
    box = box or ParameterBox.from_constants()
    if tau_lo > tau_hi:
        raise ValueError("need tau_lo <= tau_hi")
    if tau_lo < 0 < tau_hi:
        raise ValueError("knots of a cell must share a sign")
    get = (lambda t: cache.get(t, box)) if cache is not None else (lambda t: sandwich_at(t, box))
    a, b = get(tau_lo), get(tau_hi)
    lam_lb, lam_ub = a.lam_lb, b.lam_ub
    if lam_lb > lam_ub:
        raise SandwichError(f"sandwich inverted on [{tau_lo}, {tau_hi}]: {lam_lb} > {lam_ub}")
    sq = (lam_lb * lam_lb, lam_ub * lam_ub)
    return LambdaBracket(lam_lb, lam_ub, min(sq), max(sq),
                         math.sqrt((1.0 - lam_ub) / (1.0 + lam_ub)),
                         math.sqrt((1.0 - lam_lb) / (1.0 + lam_lb)),
                         max(a.gap, b.gap))


class SandwichCache:
    """Memoises sandwich_at per knot; safe to share between threads."""

    def __init__(self):
        self._store = {}

    def get(self, tau, box):
        key = (float(tau), id(box))
        if key not in self._store:
            self._store[key] = sandwich_at(tau, box)
        return self._store[key]


# ---------------------------------------------------------------------------
# Interval helpers


def _ee(x):
    return x.map_inc(lambda v: np.asarray(ee(v)))


def _ee1(x):
    # ee is convex, so ee' is increasing
    return x.map_inc(lambda v: np.asarray(ee_deriv(v, 1)))


def _logPhibar(x):
    return x.map_dec(lambda v: np.asarray(log_Phibar(v)))


def _c_of(lam):
    return lam.map_dec(lambda v: np.sqrt((1.0 - v) / (1.0 + v)))


def _root(lam):
    """sqrt(1 - lambda^2)."""
    return (1.0 - lam.sq()).sqrt()


def _cond_density(gz, y_sq):
    """phi(y)/Phibar(gamma z) written as ee(gamma z) exp(((gamma z)^2 - y^2)/2)."""
    return _ee(gz) * (0.5 * (gz.sq() - y_sq)).exp()


def _d_weight(gamma, z, x):
    """d(z, x) = phi(gamma z + x) phi(z) / Phibar(gamma z)."""
    gz = gamma * z
    return phi(z) * _ee(gz) * (-0.5 * x * x - gz * x).exp()


def _integrate(f, factors, domain, table, tol, eps_rig, tails=None):
    f.factors = factors
    return integrate_bracket(f, domain, {k: table[k] for k in factors},
                             tol=tol, eps_rig=eps_rig, tails=tails)


# ---------------------------------------------------------------------------
# Value bounds


def I_s_envelope(lam, s, box, tol=TOL, eps_rig=EPS_RIG):
    """alpha int_{-9}^{9} int_0^9 log Phibar(g - S(z)) d(z, x); hi is an upper bound for I_s."""
    def f(p, z, x):
        gam = p["gamma"]
        lm = p["lam"]
        g = gam * _c_of(lm) * z - lm.map_inc(lambda v: v / np.sqrt(1.0 - v * v)) * x
        shift = _ee(gam * z) * s / (p["psi"].sqrt() * (1.0 - p["q"]).sqrt()) if s else 0.0
        return p["alpha"] * _logPhibar(g - shift) * _d_weight(gam, z, x)

    return _integrate(f, ("alpha", "q", "psi", "gamma", "lam"), ((-9.0, 9.0), (0.0, 9.0)),
                      box.table(lam=lam), tol, eps_rig)


def I0_lower(box, tol=TOL, eps_rig=EPS_RIG):
    """Lower bound of I(0) = alpha E log Phibar(gamma Z)."""
    def f(p, z):
        return p["alpha"] * _logPhibar(p["gamma"] * z) * phi(z)

    br = _integrate(f, ("alpha", "gamma"), ((-9.0, 9.0),), box.table(), tol, eps_rig,
                    tails={"I0_tail": TAIL_I0})
    return br


def h_star_lower(box, tol=1e-13):
    """E H((1 + tanh(sqrt(psi_ub) Z))/2) over |Z| <= 9; H* decreases in psi."""
    r = math.sqrt(box.scalars("psi")[1])
    return integrate_gauss(lambda z: np.asarray(binary_entropy(0.5 * (1.0 + np.tanh(r * z)))),
                           -9.0, 9.0, tol) - tol


def entropy_upper(A, box, hstar_lb, tol=1e-13):
    """-2 H*_lb + 1e-15 + int Gamma(sqrt(psi_lb) z, D_{sqrt(psi_ub) z}(A)) phi dz."""
    psi_lb, psi_ub = box.scalars("psi")

    def f(z):
        H_small = math.sqrt(psi_lb) * z
        D = _D(psi_ub, z, A)
        # band of the smaller field contains D of the larger one
        m = np.tanh(H_small)
        lo_band = -(1.0 - np.abs(m)) ** 2
        hi_band = 1.0 / np.cosh(H_small) ** 2
        D = np.clip(D, lo_band, hi_band)
        cells = (0.25 * ((1 + m) ** 2 + D), 0.25 * (hi_band - D), 0.25 * (hi_band - D),
                 0.25 * ((1 - m) ** 2 + D))
        return _entropy(cells)

    val = integrate_gauss(f, -9.0, 9.0, tol)
    return -2.0 * hstar_lb + TAIL_ENTROPY + val + tol


@dataclass
class CellResult:
    part: str
    tau_lo: float
    tau_hi: float
    lambda_bracket: BoundBracket
    bound_value: BoundBracket
    passed: bool
    decisive: str  # 'hi' when the bound must be negative, 'lo' when positive
    components: dict = field(default_factory=dict)
    note: str = ""

    def as_dict(self):
        return {"part": self.part, "tau_lo": self.tau_lo, "tau_hi": self.tau_hi,
                "lambda_lo": self.lambda_bracket.lo, "lambda_hi": self.lambda_bracket.hi,
                "bound_lo": _finite_or_none(self.bound_value.lo),
                "bound_hi": _finite_or_none(self.bound_value.hi),
                "budget": self.bound_value.budget, "decisive": self.decisive,
                "pass": self.passed, "components": dict(self.components), "note": self.note}


def _finite_or_none(x):
    return float(x) if math.isfinite(x) else None


def _upper(value, budget, comps):
    return BoundBracket(-math.inf, value, budget, comps)


def _lower(value, budget, comps):
    return BoundBracket(value, math.inf, budget, comps)


@dataclass
class Shared:
    """Quantities reused by every cell of a run."""

    box: ParameterBox
    cache: SandwichCache
    hstar_lb: float
    I0_lb: BoundBracket
    tol: float
    eps_rig: float

    @classmethod
    def build(cls, box=None, tol=TOL, eps_rig=EPS_RIG):
        box = box or ParameterBox.from_constants()
        return cls(box, SandwichCache(), h_star_lower(box), I0_lower(box, tol, eps_rig),
                   tol, eps_rig)


def value_bound_cell(tau_lo, tau_hi, variant, shared):
    """Upper bound of S_P (variant 'SP') or S_Q (variant 'SQ') on the cell."""
    if variant not in ("SP", "SQ"):
        raise ValueError("variant must be 'SP' or 'SQ'")
    box = shared.box
    lb = lambda_sandwich(tau_lo, tau_hi, box, shared.cache)
    lam = lb.lam
    tau_in = tau_lo if abs(tau_lo) <= abs(tau_hi) else tau_hi
    h_ub = entropy_upper(A_of_tau(tau_in), box, shared.hstar_lb)
    s = 0.2 if variant == "SQ" else 0.0
    I_env = I_s_envelope(lam, s, box, shared.tol, shared.eps_rig)
    # psi (1-q) lambda/(1+lambda), increasing in lambda
    ratio = box.psi * (1.0 - box.q) * lam.map_inc(lambda v: v / (1.0 + v))
    energy = -ratio.lo + I_env.hi - shared.I0_lb.lo
    comps = {"entropy_ub": h_ub, "I_ub": I_env.hi, "I0_lb": shared.I0_lb.lo,
             "ratio_term": -float(ratio.lo)}
    if variant == "SQ":
        lin = (box.psi.sqrt() * (1.0 - box.q).sqrt() * _c_of(lam))
        energy += s * s / 2.0 - s * float(lin.lo)
        comps["linear_term"] = s * s / 2.0 - s * float(lin.lo)
    total = float(h_ub + energy)
    budget = I_env.budget + shared.I0_lb.budget + TAIL_ENTROPY
    comps.update({"budget_I": I_env.budget, "budget_I0": shared.I0_lb.budget,
                  "budget_entropy": TAIL_ENTROPY})
    return CellResult(f"A_value_{variant}", tau_lo, tau_hi, lb.as_bracket(),
                      _upper(total, budget, comps), total < 0, "hi", comps)


# ---------------------------------------------------------------------------
# First derivative bounds


def _deriv_region1(p, z, u):
    # z in [0, 6.5], x = sqrt(1-lambda^2) u, u in [0, 8]
    gam, lm = p["gamma"], p["lam"]
    root = _root(lm)
    cgz = _c_of(lm) * gam * z
    gz = gam * z
    dens = _ee(gz) * (-(gz * root * u) - 0.5 * root.sq() * u * u).exp() * phi(z)
    return p["alpha"] / root * (cgz + u) * _ee(cgz - lm * u) * dens


def _deriv_region2(p, z, v):
    # z in [-3.3, 0], x = -gamma z (1-lambda) v, v in [0, 1]
    gam, lm = p["gamma"], p["lam"]
    gz = gam * z
    c = _c_of(lm)
    y = gz * (1.0 - (1.0 - lm) * v)
    coef = -(p["alpha"] * c * gam.sq() / (1.0 + lm)) * (z * z * (1.0 - v))
    return coef * _ee(c * gz * (1.0 + lm * v)) * _cond_density(gz, y.sq()) * phi(z)


def _deriv_region3(p, z, w):
    # z in [-3.3, 0], x = -gamma z (1-lambda) + sqrt(1-lambda^2) w, w in [0, 9]
    gam, lm = p["gamma"], p["lam"]
    gz = gam * z
    root = _root(lm)
    g = root * gz - lm * w
    y = lm * gz + root * w
    return p["alpha"] / root * w * _ee(g) * _cond_density(gz, y.sq()) * phi(z)


_DERIV_REGIONS = (
    ("K1", _deriv_region1, ((0.0, 6.5), (0.0, 8.0))),
    ("K2", _deriv_region2, ((-3.3, 0.0), (0.0, 1.0))),
    ("K3", _deriv_region3, ((-3.3, 0.0), (0.0, 9.0))),
)


def I_prime_envelope(lam, box, tol=TOL, eps_rig=EPS_RIG):
    """Per-region envelope brackets of I'(lambda) over the truncated domains."""
    out = {}
    for name, fn, domain in _DERIV_REGIONS:
        out[name] = _integrate(lambda p, z, u, fn=fn: fn(p, z, u),
                               ("alpha", "gamma", "lam"), domain, box.table(lam=lam),
                               tol, eps_rig)
    return out


def deriv_bound_cell(tau_lo, tau_hi, side, shared):
    """Bound on (S_P)'(lambda) over the cell; side 'want_negative' or 'want_positive'."""
    if side not in ("want_negative", "want_positive"):
        raise ValueError("side must be 'want_negative' or 'want_positive'")
    box = shared.box
    lb = lambda_sandwich(tau_lo, tau_hi, box, shared.cache)
    lam = lb.lam
    regions = I_prime_envelope(lam, box, shared.tol, shared.eps_rig)
    q = box.q
    A_iv = Interval(A_of_tau(tau_lo), A_of_tau(tau_hi))
    h_prime = -(1.0 - q) * A_iv.log() / 2.0
    ratio_prime = box.psi * (1.0 - q) * lam.map_dec(lambda v: 1.0 / (1.0 + v) ** 2)
    comps = {k: (v.lo, v.hi) for k, v in regions.items()}
    budget = sum(v.budget for v in regions.values())
    if side == "want_negative":
        if not (0.0 <= lb.lam_lb and lb.lam_ub <= 0.95):
            return CellResult("B_first_deriv", tau_lo, tau_hi, lb.as_bracket(),
                              _upper(math.inf, 0.0, comps), False, "hi", comps,
                              "lambda envelope outside [0, 0.95]")
        K = sum(v.hi for v in regions.values()) + TAIL_DERIV_UB
        total = float(h_prime.hi - ratio_prime.lo + K)
        comps.update({"H_prime_ub": float(h_prime.hi), "ratio_prime": -float(ratio_prime.lo),
                      "tail": TAIL_DERIV_UB})
        return CellResult("B_first_deriv", tau_lo, tau_hi, lb.as_bracket(),
                          _upper(total, budget + TAIL_DERIV_UB, comps), total < 0, "hi", comps)
    tail = TAIL_DERIV_LB / math.sqrt(1.0 - lb.L_ub)
    K = sum(v.lo for v in regions.values()) - tail
    total = float(h_prime.lo - ratio_prime.hi + K)
    comps.update({"H_prime_lb": float(h_prime.lo), "ratio_prime": -float(ratio_prime.hi),
                  "tail": tail})
    return CellResult("B_first_deriv", tau_lo, tau_hi, lb.as_bracket(),
                      _lower(total, budget + tail, comps), total > 0, "lo", comps)


# ---------------------------------------------------------------------------
# Second derivative bounds


def _second_pieces(p, z, x):
    """The four pieces of I''(lambda) integrand (before integration)."""
    gam, lm = p["gamma"], p["lam"]
    alpha = p["alpha"]
    gz = gam * z
    one_m = 1.0 - lm
    L = 1.0 - lm.sq()
    g = _c_of(lm) * gz - lm.map_inc(lambda v: v / np.sqrt(1.0 - v * v)) * x
    e0, e1 = _ee(g), _ee1(g)
    d = _d_weight(gam, z, x)
    p52 = L.map_inc(lambda v: v ** 2.5)
    p3 = L.map_inc(lambda v: v ** 3)
    piece1 = -(alpha * gz) * (e1 * (2.0 * x) * one_m / p3
                              + e0 * one_m * (1.0 - 2.0 * lm) / p52) * d
    piece3 = -alpha * e1 * ((gz.sq() * one_m.sq() + x * x) / p3) * d
    piece4 = 3.0 * alpha * lm / p52 * e0 * x * d
    return piece1, piece3, piece4


SECOND_REGIONS = (("z>=0", ((0.0, 6.5), (0.0, 6.5))), ("z<=0", ((-5.0, 0.0), (0.0, 11.0))))


def I_second_envelope(lam, box, tol=TOL, eps_rig=EPS_RIG):
    """Envelope brackets of the pieces of I''(lambda) over the truncation region."""
    out = {}
    for rname, domain in SECOND_REGIONS:
        for k, label in enumerate(("M_cross", "M_square", "M_linear")):
            f = lambda p, z, x, k=k: _second_pieces(p, z, x)[k]
            out[f"{label}[{rname}]"] = _integrate(f, ("alpha", "gamma", "lam"), domain,
                                                  box.table(lam=lam), tol, eps_rig)
    return out


def tanh_slope_factor_max(n=200001, xmax=20.0):
    """max |x tanh'(x)| on a grid, to compare with 1/sqrt(2)."""
    x = np.linspace(-xmax, xmax, n)
    return float(np.max(np.abs(x / np.cosh(x) ** 2)))


def ell_prime_upper(A_lb, A_ub, box, tol=1e-13):
    """Upper bound of ell'(A) over A in [A_lb, A_ub] and the parameter box."""
    psi_lb, psi_ub = box.scalars("psi")
    q_ub = box.scalars("q")[1]

    def f(y):
        m = np.tanh(y)
        u = 1.0 / np.cosh(y) ** 2
        delta = np.sqrt(A_lb * A_lb * u + m * m)
        return (2.0 * A_ub * u * u / ((1.0 - q_ub) * delta * (delta + 1.0) ** 2)
                * np.asarray(phi(y / math.sqrt(psi_ub))) / math.sqrt(psi_lb))

    val, _ = _adaptive(f, -9.0, 9.0, tol)
    return TAIL_ELLPRIME + val + tol


def _adaptive(f, a, b, tol):
    from .quadrature import adaptive_gk
    return adaptive_gk(f, a, b, tol)


def second_deriv_bound_cell(tau_lo, tau_hi, shared):
    """Upper bound of (S_P)''(lambda) over the cell."""
    box = shared.box
    lb = lambda_sandwich(tau_lo, tau_hi, box, shared.cache)
    if not (-0.1 <= lb.lam_lb and lb.lam_ub <= 0.1):
        return CellResult("C_second_deriv", tau_lo, tau_hi, lb.as_bracket(),
                          _upper(math.inf, 0.0, {}), False, "hi", {},
                          "lambda envelope outside [-0.1, 0.1]")
    lam = lb.lam
    pieces = I_second_envelope(lam, box, shared.tol, shared.eps_rig)
    M = sum(v.hi for v in pieces.values()) + TAIL_SECOND
    q_lb, q_ub = box.scalars("q")
    psi_ub = box.scalars("psi")[1]
    P_ratio = 2.0 * psi_ub * (1.0 - q_lb) / (1.0 + lb.lam_lb) ** 3
    A_lb, A_ub = A_of_tau(tau_lo), A_of_tau(tau_hi)
    L_ub = ell_prime_upper(A_lb, A_ub, box)
    H_second = -((1.0 - q_ub) / (2.0 * A_ub)) / L_ub
    total = float(H_second + P_ratio + M)
    comps = {k: (v.lo, v.hi) for k, v in pieces.items()}
    comps.update({"H_second_ub": H_second, "ell_prime_ub": L_ub, "P_ratio": P_ratio,
                  "tail": TAIL_SECOND})
    budget = sum(v.budget for v in pieces.values()) + TAIL_SECOND + TAIL_ELLPRIME
    return CellResult("C_second_deriv", tau_lo, tau_hi, lb.as_bracket(),
                      _upper(total, budget, comps), total < 0, "hi", comps)


# ---------------------------------------------------------------------------
# Near lambda = 1


@dataclass
class Link:
    name: str
    value: float
    threshold: float
    relation: str
    passed: bool

    def as_dict(self):
        return dict(self.__dict__)


def _link(name, value, relation, threshold):
    ok = value < threshold if relation == "<" else value > threshold
    return Link(name, float(value), float(threshold), relation, bool(ok))


def ell_large_A_coefficients(box, tol=1e-13):
    """(c1, c2) with 1 - ell(A) <= c1/A + c2/A^2 for all A > 0."""
    psi_lb, psi_ub = box.scalars("psi")
    q_ub = box.scalars("q")[1]
    scale = 2.0 / (1.0 - q_ub)
    tail = 2.0 * float(0.5 * math.erfc(9.0 / math.sqrt(2.0)))
    c1 = integrate_gauss(lambda z: 1.0 / np.cosh(math.sqrt(psi_lb) * z), -9.0, 9.0, tol)
    c2 = integrate_gauss(lambda z: np.abs(np.tanh(math.sqrt(psi_ub) * z)), -9.0, 9.0, tol)
    return scale * (c1 + tail + tol), scale * (c2 + tail + tol)


def near_one_I_bound(box, lam_lb=0.975, tol=1e-11):
    """Upper bound on I(lambda)/sqrt(iota) for lambda in [lam_lb, 1)."""
    alpha_lb = box.scalars("alpha")[0]
    g_lb, g_ub = box.scalars("gamma")
    L_lb = lam_lb * lam_lb
    c_ub = math.sqrt(1.0 - lam_lb) / math.sqrt(1.0 + lam_lb)
    root = math.sqrt(1.0 - L_lb)
    from .quadrature import composite_gl

    def outer_pos(z):
        u, w = composite_gl(0.0, 9.0, 64)
        zc = z[:, None]
        # phi(g_ub z + root u) / Phibar(g_lb z), via ee
        dens = (np.asarray(ee(g_lb * zc)) * np.exp(0.5 * (g_lb * zc) ** 2
                                                   - 0.5 * (g_ub * zc + root * u) ** 2))
        val = np.asarray(log_Phibar(-u)) * dens * w
        return val.sum(axis=1) * np.asarray(phi(z))

    def outer_neg(z):
        u, w = composite_gl(0.0, 9.0, 64)
        zc = z[:, None]
        dens = np.asarray(ee(g_ub * zc)) * np.exp(-0.5 * u * u * (1.0 - L_lb))
        val = np.asarray(log_Phibar(c_ub * g_ub * zc - u)) * dens * w
        return val.sum(axis=1) * np.asarray(phi(z))

    pos, _ = _adaptive(outer_pos, 0.0, 9.0, tol)
    neg, _ = _adaptive(outer_neg, -9.0, 0.0, tol)
    # the integrand is negative, so the smaller prefactor gives the upper bound
    return alpha_lb * math.sqrt(1.0 + lam_lb) * (pos + neg) + 2 * tol


NEAR_ONE_A0 = 100.0
NEAR_ONE_LAMBDA_LB = 0.975
NEAR_ONE_TAU_LINK = 0.99


def near_one_check(shared=None, iota_max=None):
    """Chain of inequalities giving S_P(lambda) < S_P(1) for lambda in [1 - iota_max, 1).

    The slope constant of the entropy bound is rebuilt from the computed
    coefficients c1 + c2/A0 instead of a fixed number.  ``iota_max`` defaults
    to 1 - lambda_lb(0.99), the top of what the value grid certifies.  The
    fixed constants 1.78, 4.3 and 1.83 are still evaluated and reported as
    informational links; they do not enter the verdict.
    """
    shared = shared or Shared.build()
    box = shared.box
    q_lb = box.scalars("q")[0]
    psi_ub = box.scalars("psi")[1]
    iota_cap = 1.0 - NEAR_ONE_LAMBDA_LB
    if iota_max is None:
        iota_max = 1.0 - shared.cache.get(NEAR_ONE_TAU_LINK, box).lam_lb
    links, info = [], []
    c1, c2 = ell_large_A_coefficients(box)
    slope_const = c1 + c2 / NEAR_ONE_A0
    info.append(_link("fixed constant: c1 <= 1.78", c1, "<", 1.78))
    info.append(_link("fixed constant: c2 <= 4.3", c2, "<", 4.3))
    s200 = sandwich_at(tau_of(200.0), box)
    info.append(_link("fixed constant: 200 (1 - ell(200)) <= 1.83", 200.0 * (1.0 - s200.lam_lb),
                      "<", 1.83))
    # A >= A0 whenever iota <= iota(A0), since iota is decreasing in A
    iota_A0 = 1.0 - sandwich_at(tau_of(NEAR_ONE_A0), box).lam_ub
    links.append(_link("iota(100) > 0.025", iota_A0, ">", iota_cap))
    links.append(_link("iota range inside (0, 0.025]", iota_max, "<", iota_cap + 1e-300))
    entropy_const = math.log(slope_const) / 2.0 + 0.5
    mid = psi_ub * (1.0 - q_lb) / (2.0 * (2.0 - iota_cap))
    I_bound = near_one_I_bound(box, NEAR_ONE_LAMBDA_LB)
    links.append(_link("I(lambda)/sqrt(iota) bound < 0", I_bound, "<", 0.0))
    total_const = entropy_const + mid

    def combined(iota):
        return np.sqrt(iota) * (total_const + 0.5 * np.log(1.0 / iota)) + I_bound

    # d/d iota of combined is (2 K - 2 + log(1/iota)) / (4 sqrt(iota)) > 0 for iota < exp(2K - 2)
    links.append(_link("combined bound increasing on (0, iota_max]",
                       math.log(iota_max) - (2.0 * total_const - 2.0), "<", 0.0))
    worst = float(combined(iota_max))
    links.append(_link("combined bound at iota_max < 0", worst, "<", 0.0))
    grid = np.linspace(iota_max * 1e-9, iota_max, 4001)
    links.append(_link("combined bound on an iota grid < 0", float(combined(grid).max()),
                       "<", 0.0))
    ok = all(l.passed for l in links)
    comps = {l.name: l.value for l in links + info}
    comps.update({"c1": c1, "c2": c2, "slope_const": slope_const, "entropy_const": entropy_const,
                  "middle_const": mid, "I_bound": I_bound, "iota_max": iota_max})
    lam_br = BoundBracket(1.0 - iota_max, 1.0, 0.0, {})
    res = CellResult("NEAR_ONE", math.nan, math.nan, lam_br, _upper(worst, 0.0, comps), ok,
                     "hi", comps)
    res.links = links
    res.info_links = info
    return res


def tau_of(A):
    return (A - 1.0) / (A + 1.0)


# ---------------------------------------------------------------------------
# Orchestration


@dataclass(frozen=True)
class EndpointCheck:
    name: str
    value: float
    relation: str
    threshold: float
    passed: bool

    def as_dict(self):
        return dict(self.__dict__)


def _endpoint(name, value, relation, threshold):
    ok = value < threshold if relation == "<" else value > threshold
    return EndpointCheck(name, float(value), relation, float(threshold), bool(ok))


@dataclass
class VerificationReport:
    parts: dict
    budgets: dict
    coverage: list
    endpoint_checks: list
    near_one: CellResult
    constants_checks: list
    verdict: bool
    first_failure: str = ""
    config: dict = field(default_factory=dict)
    informational: list = field(default_factory=list)

    def all_cells(self):
        for name in sorted(self.parts):
            yield from self.parts[name]


def _threads(threads):
    if threads is None:
        try:
            threads = int(os.environ.get(THREADS_ENV, "1"))
        except ValueError:
            threads = 1
    return max(1, threads)


def _run_cells(fn, cells, threads):
    if threads == 1:
        return [fn(a, b) for a, b in cells]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda ab: fn(*ab), cells))


SUBDIVIDE = 6


def subdivided(fn, tau_lo, tau_hi, depth=SUBDIVIDE):
    """Evaluate a cell bound, bisecting in tau while the envelope is inconclusive.

    The cell passes only if every leaf passes; it reports the worst leaf bound
    and the number of leaves.  ``depth=0`` is a single envelope evaluation.
    """
    res = fn(tau_lo, tau_hi)
    if res.passed or depth <= 0 or res.note:
        res.components.setdefault("leaves", 1)
        return res
    mid = 0.5 * (tau_lo + tau_hi)
    left = subdivided(fn, tau_lo, mid, depth - 1)
    right = subdivided(fn, mid, tau_hi, depth - 1)
    if res.decisive == "hi":
        worst = max((left, right), key=lambda r: r.bound_value.hi)
    else:
        worst = min((left, right), key=lambda r: r.bound_value.lo)
    leaves = left.components["leaves"] + right.components["leaves"]
    lam = BoundBracket(left.lambda_bracket.lo, right.lambda_bracket.hi, 0.0,
                       {"sandwich_gap": max(left.lambda_bracket.components.get("sandwich_gap", 0.0),
                                            right.lambda_bracket.components.get("sandwich_gap", 0.0))})
    comps = dict(worst.components)
    comps.update({"leaves": leaves, "single_box_bound": (res.bound_value.lo, res.bound_value.hi),
                  "worst_leaf": (worst.tau_lo, worst.tau_hi)})
    return CellResult(res.part, tau_lo, tau_hi, lam, worst.bound_value,
                      left.passed and right.passed, res.decisive, comps, worst.note)


def verify_condition_g(constants=CONSTANTS, *, tol=TOL, eps_rig=EPS_RIG, refine=1,
                       subdivide=SUBDIVIDE, threads=None, parts=None, psi_widen=0.0,
                       fail_fast=False):
    """Run the grid parts, the endpoint checks, the near-one chain and the constants checks.

    ``parts`` selects from ("A", "B", "C", "NEAR_ONE", "CONSTANTS"); the
    verdict needs all of them.
    """
    box = ParameterBox.from_constants(constants, psi_widen)
    shared = Shared.build(box, tol, eps_rig)
    grids = default_grids(refine)
    threads = _threads(threads)
    wanted = tuple(parts or ("A", "B", "C", "NEAR_ONE", "CONSTANTS"))
    const_checks = []
    if "CONSTANTS" in wanted:
        from .replica_saddle import check_constants
        const_checks = check_constants(constants)

    jobs = {
        "A_value_pos": ("A", lambda a, b: value_bound_cell(a, b, "SP", shared)),
        "A_value_neg": ("A", lambda a, b: value_bound_cell(a, b, "SQ", shared)),
        "B_first_deriv_pos": ("B", lambda a, b: deriv_bound_cell(a, b, "want_negative", shared)),
        "B_first_deriv_neg": ("B", lambda a, b: deriv_bound_cell(a, b, "want_positive", shared)),
        "C_second_deriv_neg": ("C", lambda a, b: second_deriv_bound_cell(a, b, shared)),
        "C_second_deriv_pos": ("C", lambda a, b: second_deriv_bound_cell(a, b, shared)),
    }
    results = {}
    first_failure = ""
    for name, (tag, fn) in jobs.items():
        if tag not in wanted:
            continue
        cells = grids[name].cells()
        fn = (lambda a, b, fn=fn: subdivided(fn, a, b, subdivide))
        if fail_fast:
            out = []
            for a, b in cells:
                r = fn(a, b)
                out.append(r)
                if not r.passed:
                    break
        else:
            out = _run_cells(fn, cells, threads)
        out.sort(key=lambda r: r.tau_lo)
        results[name] = out
        bad = [r for r in out if not r.passed]
        if bad and not first_failure:
            first_failure = f"{name} cell [{bad[0].tau_lo}, {bad[0].tau_hi}]"
        if fail_fast and first_failure:
            break

    lam = lambda t, side: getattr(shared.cache.get(t, box), side)
    endpoints = []
    if "A" in wanted:
        endpoints += [_endpoint("lambda_ub(0.24) < 0.2", lam(0.24, "lam_ub"), "<", 0.2),
                      _endpoint("lambda_lb(0.99) > 0.98", lam(0.99, "lam_lb"), ">", 0.98),
                      _endpoint("lambda_lb(-0.18) > -0.125", lam(-0.18, "lam_lb"), ">", -0.125)]
    if "B" in wanted:
        endpoints += [_endpoint("lambda_lb(0.26) > 0.2", lam(0.26, "lam_lb"), ">", 0.2),
                      _endpoint("lambda_ub(0.06) < 0.05", lam(0.06, "lam_ub"), "<", 0.05),
                      _endpoint("lambda_ub(-0.19) < -0.125", lam(-0.19, "lam_ub"), "<", -0.125),
                      _endpoint("lambda_lb(-0.03) > -0.03", lam(-0.03, "lam_lb"), ">", -0.03),
                      _endpoint("lambda_ub(0.95) < 0.95", lam(0.95, "lam_ub"), "<", 0.95)]
    if "C" in wanted:
        endpoints += [_endpoint("lambda_ub(-0.043) < -0.03", lam(-0.043, "lam_ub"), "<", -0.03),
                      _endpoint("lambda_lb(0.078) > 0.05", lam(0.078, "lam_lb"), ">", 0.05),
                      _endpoint("max |x tanh'(x)| <= 1/sqrt(2)", tanh_slope_factor_max(), "<",
                                1.0 / math.sqrt(2.0))]
    # the sandwich gap over every knot used and a fixed tau grid
    gaps = [s.gap for s in list(shared.cache._store.values())]
    for t in np.linspace(-0.99, 0.99, 41):
        gaps.append(sandwich_at(float(t), box).gap)
    # informational: the sandwich is valid whatever its width
    informational = [_endpoint("max |ell_out - ell_in| <= 1.4e-11", max(gaps), "<",
                               SANDWICH_GAP + 1e-300)]
    if not first_failure:
        for e in endpoints:
            if not e.passed:
                first_failure = f"endpoint check {e.name}"
                break

    near = None
    if "NEAR_ONE" in wanted and not (fail_fast and first_failure):
        near = near_one_check(shared)
        if not near.passed and not first_failure:
            first_failure = "near-one chain"

    coverage = _coverage(results, shared, box, near)
    lmin = lam(-1.0, "lam_lb")
    covered = _covers(coverage, lmin)
    all_cells_pass = all(r.passed for rs in results.values() for r in rs)
    verdict = (all_cells_pass and all(e.passed for e in endpoints)
               and (near is not None and near.passed) and covered
               and set(results) == set(jobs)
               and ("CONSTANTS" in wanted and all(c.passed for c in const_checks)))
    if not verdict and not first_failure:
        first_failure = "coverage incomplete" if not covered else "part not run"
    budgets = {
        "quadrature_tol": tol, "eps_rig": eps_rig,
        "tail_lambda_sandwich": TAIL_LAMBDA, "tail_entropy": TAIL_ENTROPY,
        "tail_I0": TAIL_I0, "tail_first_deriv_ub": TAIL_DERIV_UB,
        "tail_first_deriv_lb_coefficient": TAIL_DERIV_LB,
        "tail_second_deriv": TAIL_SECOND, "tail_ell_prime": TAIL_ELLPRIME,
    }
    config = {"tol": tol, "eps_rig": eps_rig, "refine": refine, "subdivide": subdivide,
              "threads": threads, "psi_widen": psi_widen, "parts": list(wanted)}
    return VerificationReport(results, budgets, coverage, endpoints, near, const_checks,
                              bool(verdict), first_failure, config, informational)


def _coverage(results, shared, box, near):
    """Lambda intervals certified by each part, from the guaranteed inner sandwich."""
    cov = []

    def span(name, part):
        rs = results.get(name)
        if not rs or not all(r.passed for r in rs):
            return
        t0, t1 = rs[0].tau_lo, rs[-1].tau_hi
        lo = shared.cache.get(t0, box).lam_ub
        hi = shared.cache.get(t1, box).lam_lb
        if t0 <= -1.0:
            lo = shared.cache.get(t0, box).lam_lb
        cov.append({"part": part, "lambda_lo": lo, "lambda_hi": hi, "tau_lo": t0, "tau_hi": t1})

    span("A_value_neg", "A_value (S_Q < 0)")
    span("B_first_deriv_neg", "B_first_deriv ((S_P)' > 0)")
    if results.get("C_second_deriv_neg") and results.get("C_second_deriv_pos"):
        rs = results["C_second_deriv_neg"] + results["C_second_deriv_pos"]
        if all(r.passed for r in rs):
            t0, t1 = rs[0].tau_lo, rs[-1].tau_hi
            cov.append({"part": "C_second_deriv ((S_P)'' < 0)",
                        "lambda_lo": shared.cache.get(t0, box).lam_ub,
                        "lambda_hi": shared.cache.get(t1, box).lam_lb,
                        "tau_lo": t0, "tau_hi": t1})
    span("B_first_deriv_pos", "B_first_deriv ((S_P)' < 0)")
    span("A_value_pos", "A_value (S_P < 0)")
    if near is not None and near.passed:
        cov.append({"part": "NEAR_ONE", "lambda_lo": near.lambda_bracket.lo, "lambda_hi": 1.0,
                    "tau_lo": None, "tau_hi": None})
    cov.sort(key=lambda c: c["lambda_lo"])
    return cov


def _covers(coverage, lmin):
    """True when the certified intervals chain from lambda_min to 1 without gaps."""
    if not coverage:
        return False
    reach = lmin
    if coverage[0]["lambda_lo"] > lmin:
        return False
    for c in coverage:
        if c["lambda_lo"] > reach:
            return False
        reach = max(reach, c["lambda_hi"])
    return reach >= 1.0
