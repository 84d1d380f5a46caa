"""Finite-N simulation of the TAP/AMP iteration, its perturbed fixed point and
the staged rounding (Kim-Roche) that completes a near-solution.

Disorder is drawn with numpy's PCG64 generator.  Matrix-vector products use
``np.einsum`` (no BLAS), so a trajectory is a deterministic function of
(seed, M, N, t) and does not depend on the number of BLAS threads.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .replica_saddle import F_q
from .scalar_kernels import L, L_inverse, ee_deriv

MEMORY_BUDGET_BYTES = 2 * 1024 ** 3


class SimulationError(RuntimeError):
    """The iteration left its domain; ``state`` holds the last good state."""

    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


@dataclass(frozen=True)
class Disorder:
    M: int
    N: int
    entries: np.ndarray
    seed: int

    def __post_init__(self):
        if self.entries.shape != (self.M, self.N):
            raise ValueError("entries must have shape (M, N)")


def sample_disorder(M, N, seed):
    """M x N i.i.d. standard Gaussian array from PCG64 seeded with ``seed``."""
    M, N = int(M), int(N)
    if M < 1 or N < 1:
        raise ValueError("M and N must be >= 1")
    if 8 * M * N > MEMORY_BUDGET_BYTES:
        raise MemoryError(f"{M} x {N} disorder needs {8 * M * N / 2**30:.1f} GiB, "
                          f"over the {MEMORY_BUDGET_BYTES / 2**30:.0f} GiB budget")
    rng = np.random.Generator(np.random.PCG64(seed))
    return Disorder(M, N, rng.standard_normal((M, N)), int(seed))


def _matvec(E, v):
    return np.einsum("ij,j->i", E, v)


def _rmatvec(E, v):
    return np.einsum("ij,i->j", E, v)


def _F_prime(q, kappa, x):
    s = math.sqrt(1.0 - q)
    return -np.asarray(ee_deriv((kappa - x) / s, 1)) / (s * s)


@dataclass
class TapState:
    iter: int
    m_vec: np.ndarray
    n_vec: np.ndarray
    h_vec: np.ndarray
    H_vec: np.ndarray
    q_s: float
    psi_s: float
    b_s: float
    d_s: float

    def summary(self):
        return {"iter": self.iter, "q": self.q_s, "psi": self.psi_s, "b": self.b_s,
                "d": self.d_s}


def tap_iterate(d, p, t, sp, q1=None):
    """t rounds of the TAP equations started from m = sqrt(q1) 1, n = 0.

    Returns the states s = 1..t; state s holds m^(s), n^(s) = F(h^(s)) and
    H^(s) (the field that produced m^(s); zero for s = 1).
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    q1 = sp.q_star if q1 is None else float(q1)
    if not 0.0 < q1 < 1.0:
        raise ValueError("q1 must lie in (0, 1)")
    E, N = d.entries, d.N
    root_n = math.sqrt(N)
    m = np.full(N, math.sqrt(q1))
    H = np.zeros(N)
    n_prev = np.zeros(d.M)
    states = []
    for s in range(1, t + 1):
        q_s = float(m @ m) / N
        if not 0.0 <= q_s < 1.0:
            raise SimulationError(f"q_{s} = {q_s} left [0, 1)", states[-1] if states else None)
        b = 1.0 - q_s
        h = _matvec(E, m) / root_n - b * n_prev
        n = F_q(q1, p.kappa, h)
        if not np.all(n > 0):
            raise SimulationError(f"nonpositive n at iteration {s}", states[-1] if states else None)
        dd = float(np.sum(_F_prime(q1, p.kappa, h))) / N
        states.append(TapState(s, m, n, h, H, q_s, float(n @ n) / N, b, dd))
        H = _rmatvec(E, n) / root_n - dd * m
        m = np.tanh(H)
        if np.any(np.abs(m) >= 1.0):
            raise SimulationError(f"|m| reached 1 at iteration {s + 1}", states[-1])
        n_prev = n
    return states


def perturbed_fixed_point(d, p, state, kappa_perturb, extra=None):
    """Solve (E m + extra)/sqrt(N) - kappa_perturb = h + (1-q) F_q(h) for h.

    ``extra`` is the M-vector contributed by additional columns (e.g. the
    rounded block); returns (h, n) with n = F_q(h), q = q_t of ``state``.
    """
    q = state.q_s
    rhs = _matvec(d.entries, state.m_vec)
    if extra is not None:
        rhs = rhs + np.asarray(extra, dtype=float)
    y = rhs / math.sqrt(d.N) - np.asarray(kappa_perturb, dtype=float)
    bad = np.flatnonzero(~(y > p.kappa))
    if bad.size:
        raise ValueError(f"right side <= kappa at coordinates {bad[:20].tolist()}"
                         f"{' ...' if bad.size > 20 else ''}")
    h = np.asarray(L_inverse(q, p.kappa, y))
    return h, F_q(q, p.kappa, h)


def perturbation_vector(M, delta, seed):
    """Uniform sample from the cube [0, delta / exp(1/delta^2)]^M."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.uniform(0.0, delta / math.exp(1.0 / delta ** 2), size=M)


def sigma_sq_empirical(state):
    """||1 - m^2||^2 / (N (1 - q)^2)."""
    m = np.asarray(state.m_vec, dtype=float)
    u = 1.0 - m * m
    q = float(m @ m) / m.size
    return float(u @ u) / (m.size * (1.0 - q) ** 2)


# ---------------------------------------------------------------------------
# Staged rounding


def kr_block_sizes(M, delta):
    """Stage sizes N_s = (M delta / 4^s) / (4 s + 2 exp(delta^(-3/4)) + 16), s = 1..s_end.

    s_end is the largest s with 2^s <= (M delta)^(1/4); sizes are rounded up
    so every stage owns at least one column.
    """
    s_end = int(math.floor(math.log2((M * delta) ** 0.25))) if M * delta >= 1 else 0
    sizes = []
    for s in range(1, s_end + 1):
        raw = (M * delta / 4 ** s) / (4 * s + 2 * math.exp(delta ** -0.75) + 16)
        sizes.append(max(1, math.ceil(raw)))
    return sizes


def kr_thresholds(M, N, delta, kappa, s_end):
    return [math.sqrt(N) * kappa + math.sqrt(M * delta) * (1.0 + 2.0 ** -s)
            for s in range(s_end + 1)]


@dataclass
class KimRocheRun:
    delta: float
    stage_sizes: list
    thresholds: list
    deficit_norms: list
    j_hat: np.ndarray
    success: bool
    min_margin: float
    meets_final_margin: bool
    stage_stop: int
    warnings: list = field(default_factory=list)

    def summary(self):
        return {"delta": self.delta, "stage_sizes": list(self.stage_sizes),
                "thresholds": list(self.thresholds), "deficit_norms": list(self.deficit_norms),
                "success": self.success, "min_margin": self.min_margin,
                "meets_final_margin": self.meets_final_margin,
                "stage_stop": self.stage_stop, "warnings": list(self.warnings)}


def kim_roche(d_hat, target, delta, kappa=0.0, N=None, seed=None):
    """Choose the signs of the columns of ``d_hat`` stage by stage.

    ``target`` is z^(0) = E m (unnormalised).  At stage s the next N_s signs are
    the signs of E_hat(stage)^T f^(s-1), where f^(s) = (T_s - z^(s))_+ is the
    deficit.  Success means f = 0 at the last stage.  ``N`` is the width of
    the main block (used in T_s); it defaults to M / 0.833.  ``seed`` only
    labels the run.
    """
    M = d_hat.M
    target = np.asarray(target, dtype=float)
    if target.shape != (M,):
        raise ValueError("target must be an M-vector")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    N = int(round(M / 0.833)) if N is None else int(N)
    notes = []
    sizes = kr_block_sizes(M, delta)
    s_end = len(sizes)
    T = kr_thresholds(M, N, delta, kappa, s_end)
    if sum(sizes) > d_hat.N:
        notes.append(f"stage budget {sum(sizes)} exceeds the {d_hat.N} available columns")
    if d_hat.N / N > delta / math.exp(delta ** (-2.0 / 3.0)):
        notes.append("N_hat/N exceeds delta / exp(delta^(-2/3))")
    for msg in notes:
        warnings.warn(msg)
    z = target.copy()
    f = np.maximum(T[0] - z, 0.0)
    norms = [float(np.linalg.norm(f))]
    j_hat = np.zeros(d_hat.N)
    col = 0
    stop = 0
    for s in range(1, s_end + 1):
        if not np.any(f > 0):
            break
        if col + sizes[s - 1] > d_hat.N:
            notes.append(f"ran out of columns at stage {s}")
            break
        block = d_hat.entries[:, col:col + sizes[s - 1]]
        signs = np.sign(_rmatvec(block, f))
        signs[signs == 0] = 1.0
        j_hat[col:col + sizes[s - 1]] = signs
        z = z + _matvec(block, signs)
        col += sizes[s - 1]
        f = np.maximum(T[s] - z, 0.0)
        norms.append(float(np.linalg.norm(f)))
        stop = s
    # unused columns get +1 so j_hat is a full sign vector
    j_hat[col:] = 1.0
    z_full = target + _matvec(d_hat.entries[:, col:], j_hat[col:]) if col < d_hat.N else z
    success = not np.any(f > 0)
    margin = float(np.min(z_full)) / math.sqrt(N)
    return KimRocheRun(delta, sizes, T, norms, j_hat, bool(success), margin,
                       bool(margin >= kappa + 2.0 * math.sqrt(delta)), stop, notes)


def base_case_target(M, N, delta, kappa, seed, deficit_scale=1.0):
    """Synthetic z^(0) satisfying the induction hypothesis ||f^(0)|| <= N_1 / 5.

    Coordinates sit above T_0 by a half-normal slack of size sqrt(N); a random
    10% of them are pushed below T_0 by a deficit of total norm
    deficit_scale * N_1 / 5.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    sizes = kr_block_sizes(M, delta)
    T0 = kr_thresholds(M, N, delta, kappa, 0)[0]
    z = T0 + math.sqrt(N) * np.abs(rng.standard_normal(M))
    if sizes:
        k = max(1, M // 10)
        idx = rng.choice(M, size=k, replace=False)
        v = np.abs(rng.standard_normal(k))
        v *= deficit_scale * (sizes[0] / 5.0) / np.linalg.norm(v)
        z[idx] = T0 - v
    return z


def tap_target(M, N, p, sp, t, seed):
    """z^(0) = E m^(t) from a TAP run on an M x N block."""
    d = sample_disorder(M, N, seed)
    states = tap_iterate(d, p, t, sp)
    return _matvec(d.entries, states[-1].m_vec)


def L_residual(q, kappa, h, y):
    """max |L(h) - y|, for checking a fixed-point solve."""
    return float(np.max(np.abs(np.asarray(L(q, kappa, h)) - y)))
