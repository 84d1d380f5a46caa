"""Exhaustive enumeration of {-1,+1}^N for tiny N.

J is split into low bits (a table of all 2^lo partial sums, built once) and
high bits (walked in Gray-code order, one column update of O(M) per flip).
Each step therefore handles 2^lo configurations at once.  A constraint
(G J)_mu / sqrt(N) >= kappa counts as satisfied, ties included.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

N_MAX = 26
LOW_BITS = 12


def _check_N(N, limit=N_MAX):
    if not 1 <= N <= limit:
        raise ValueError(f"N must lie in [1, {limit}], got {N}")


def _gray_table(cols):
    """Sums cols @ J for every J in {-1,+1}^k, in Gray-code order; also the J's."""
    M, k = cols.shape
    sums = np.empty((M, 2 ** k))
    signs = np.empty((k, 2 ** k), dtype=np.int8)
    cur = -cols.sum(axis=1)
    J = -np.ones(k, dtype=np.int8)
    sums[:, 0] = cur
    signs[:, 0] = J
    for i in range(1, 2 ** k):
        bit = (i & -i).bit_length() - 1
        J[bit] = -J[bit]
        cur = cur + 2.0 * J[bit] * cols[:, bit]
        sums[:, i] = cur
        signs[:, i] = J
    return sums, signs


def _gray_walk(cols):
    """Yield the running sums cols @ J over all J in Gray-code order."""
    M, k = cols.shape
    cur = -cols.sum(axis=1)
    J = -np.ones(k)
    yield cur
    for i in range(1, 2 ** k):
        bit = (i & -i).bit_length() - 1
        J[bit] = -J[bit]
        cur = cur + 2.0 * J[bit] * cols[:, bit]
        yield cur


def _split(N):
    lo = min(N, LOW_BITS)
    return lo, N - lo


def violation_histogram(G, kappa=0.0):
    """counts[k] = number of J with exactly k violated constraints."""
    G = np.asarray(G, dtype=float)
    M, N = G.shape
    _check_N(N)
    thr = kappa * math.sqrt(N)
    lo, hi = _split(N)
    low_sums, _ = _gray_table(G[:, :lo])
    counts = np.zeros(M + 1, dtype=np.int64)
    for hs in _gray_walk(G[:, lo:]):
        viol = np.count_nonzero(low_sums + hs[:, None] < thr, axis=0)
        counts += np.bincount(viol, minlength=M + 1)
    return counts


def exhaustive_Z(d, kappa=0.0):
    """Number of J with (G J)_mu / sqrt(N) >= kappa for every row."""
    G = d.entries if hasattr(d, "entries") else np.asarray(d, dtype=float)
    M, N = G.shape
    _check_N(N)
    thr = kappa * math.sqrt(N)
    lo, hi = _split(N)
    low_sums, _ = _gray_table(G[:, :lo])
    total = 0
    for hs in _gray_walk(G[:, lo:]):
        total += int(np.count_nonzero(np.all(low_sums + hs[:, None] >= thr, axis=0)))
    return total


def naive_Z(d, kappa=0.0):
    """Direct re-evaluation of every configuration (for N <= 12)."""
    G = d.entries if hasattr(d, "entries") else np.asarray(d, dtype=float)
    M, N = G.shape
    _check_N(N, 12)
    thr = kappa * math.sqrt(N)
    return sum(1 for J in itertools.product((-1.0, 1.0), repeat=N)
               if np.all(G @ np.array(J) >= thr))


def soft_Z(d, kappa=0.0, beta=1.0):
    """log of the sum over J of exp(-beta * number of violated constraints)."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    G = d.entries if hasattr(d, "entries") else np.asarray(d, dtype=float)
    counts = violation_histogram(G, kappa)
    k = np.flatnonzero(counts)
    return float(logsumexp(-beta * k + np.log(counts[k])))


@dataclass
class ExhaustiveResult:
    N: int
    M: int
    Z: int
    M_N: int
    censored: bool = False
    log_Z_beta: dict = field(default_factory=dict)
    Z_path: list = field(default_factory=list)


def capacity_MN(rows, N, kappa=0.0, M_max=None):
    """Append rows until no J survives; M_N is the last M with Z > 0.

    ``rows`` is an iterable of length-N vectors.  If it runs out (or M_max is
    reached) while Z > 0 the result is marked censored.
    """
    _check_N(N)
    thr = kappa * math.sqrt(N)
    lo, hi = _split(N)
    # all configurations as (high, low) sign blocks, in fixed order
    low_signs = np.array(list(itertools.product((-1.0, 1.0), repeat=lo))).T
    high_signs = np.array(list(itertools.product((-1.0, 1.0), repeat=hi))).T if hi else np.ones((0, 1))
    alive = np.ones((high_signs.shape[1], low_signs.shape[1]), dtype=bool)
    Z_path = []
    M = 0
    for row in rows:
        if M_max is not None and M >= M_max:
            break
        row = np.asarray(row, dtype=float)
        if row.shape != (N,):
            raise ValueError("each row must have length N")
        s = (row[lo:] @ high_signs)[:, None] + (row[:lo] @ low_signs)[None, :]
        alive &= s >= thr
        M += 1
        Z = int(np.count_nonzero(alive))
        Z_path.append(Z)
        if Z == 0:
            return ExhaustiveResult(N, M, 0, M - 1, False, Z_path=Z_path)
    return ExhaustiveResult(N, M, Z_path[-1] if Z_path else 2 ** N, M, True, Z_path=Z_path)


def gaussian_rows(N, seed):
    """Endless stream of standard Gaussian rows from PCG64(seed)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    while True:
        yield rng.standard_normal(N)


def capacity_trials(N, trials, kappa=0.0, seed0=0, M_max=None):
    """M_N for seeds seed0 .. seed0 + trials - 1."""
    M_max = M_max or 4 * N
    return [capacity_MN(gaussian_rows(N, seed0 + i), N, kappa, M_max) for i in range(trials)]
