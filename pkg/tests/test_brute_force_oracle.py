import math

import numpy as np
import pytest

from artifact.brute_force_oracle import (capacity_MN, capacity_trials, exhaustive_Z,
                                         gaussian_rows, naive_Z, soft_Z, violation_histogram)


def test_single_row():
    assert exhaustive_Z(np.array([[1.0, 0.0]])) == 2


@pytest.mark.parametrize("N", [1, 3, 7, 12])
def test_gray_code_matches_naive(N):
    rng = np.random.default_rng(N)
    for M in (1, 3, N):
        G = rng.standard_normal((M, N))
        assert exhaustive_Z(G) == naive_Z(G)
        assert exhaustive_Z(G, 0.3) == naive_Z(G, 0.3)


def test_mirror_problem_partitions_cube():
    rng = np.random.default_rng(5)
    G = rng.standard_normal((1, 14))
    assert exhaustive_Z(G) + exhaustive_Z(-G) == 2 ** 14


def test_histogram_sums_to_cube():
    G = np.random.default_rng(2).standard_normal((9, 15))
    h = violation_histogram(G)
    assert h.sum() == 2 ** 15 and h[0] == exhaustive_Z(G)


def test_soft_count_limits():
    G = np.random.default_rng(3).standard_normal((6, 13))
    assert soft_Z(G, beta=0.0) == pytest.approx(13 * math.log(2), abs=1e-12)
    Z = exhaustive_Z(G)
    assert Z > 0
    assert soft_Z(G, beta=100.0) == pytest.approx(math.log(Z), abs=1e-6)


def test_count_monotone_under_appended_rows():
    res = capacity_MN(gaussian_rows(16, 4), 16, M_max=64)
    assert all(b <= a for a, b in zip(res.Z_path, res.Z_path[1:]))
    assert res.Z_path[res.M_N - 1] > 0 if res.M_N else True
    rows = np.random.default_rng(4).standard_normal((5, 16))
    assert capacity_MN(iter(rows), 16).Z_path[-1] == exhaustive_Z(rows)


def test_censored_when_rows_run_out():
    res = capacity_MN(iter(np.ones((2, 4))), 4)
    assert res.censored


def test_rejects_large_N():
    with pytest.raises(ValueError):
        exhaustive_Z(np.ones((1, 27)))


def test_small_N_capacity_distribution():
    ratios = [r.M_N / 14 for r in capacity_trials(14, 20, seed0=0)]
    assert 0.5 < np.mean(ratios) < 1.3
