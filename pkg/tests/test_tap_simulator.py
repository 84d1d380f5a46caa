import math

import numpy as np
import pytest

from artifact.overlap_exponents import H_deriv, OverlapPoint
from artifact.replica_saddle import F_q
from artifact.scalar_kernels import L
from artifact.tap_simulator import (KimRocheRun, TapState, base_case_target, kim_roche,
                                    kr_block_sizes, perturbation_vector, perturbed_fixed_point,
                                    sample_disorder, sigma_sq_empirical, tap_iterate)


def test_disorder_is_reproducible_and_standard():
    a, b = sample_disorder(300, 200, 7), sample_disorder(300, 200, 7)
    assert np.array_equal(a.entries, b.entries)
    M, N = 300, 200
    assert abs(a.entries.mean()) <= 5 / math.sqrt(M * N)
    norms = np.linalg.norm(a.entries, axis=0) / math.sqrt(M)
    assert np.all(np.abs(norms - 1) <= 5 / math.sqrt(M))


def test_disorder_memory_guard():
    with pytest.raises(MemoryError):
        sample_disorder(10 ** 6, 10 ** 6, 0)


@pytest.fixture(scope="module")
def run(sp):
    d = sample_disorder(int(round(sp.alpha * 2000)), 2000, 3)
    return d, tap_iterate(d, sp.params, 20, sp)


def test_onsager_coefficient_is_exact(run):
    _, states = run
    for s in states:
        assert s.b_s == 1.0 - s.q_s


def test_iteration_tracks_fixed_point(run, sp):
    _, states = run
    assert abs(states[-1].q_s - sp.q_star) < 0.02


def test_field_variance_matches_overlap(sp):
    d = sample_disorder(int(round(sp.alpha * 4000)), 4000, 11)
    states = tap_iterate(d, sp.params, 10, sp)
    assert np.var(states[-1].h_vec) == pytest.approx(sp.q_star, abs=0.02)


def test_sigma_sq_definition_and_trend(run, sp):
    z = TapState(0, np.zeros(50), None, None, None, 0.0, 0.0, 1.0, 0.0)
    assert sigma_sq_empirical(z) == pytest.approx(1.0)
    _, states = run
    h2 = H_deriv(OverlapPoint(0.0, 0.0, 1.0), sp, 2)
    assert abs(1 / sigma_sq_empirical(states[-1]) + h2) <= 0.05


def test_perturbed_fixed_point(run, sp):
    d, states = run
    st = states[-1]
    h, n = perturbed_fixed_point(d, sp.params, st, 0.0)
    y = d.entries @ st.m_vec / math.sqrt(d.N)
    assert np.allclose(h + (1 - st.q_s) * F_q(st.q_s, 0.0, h), y, atol=1e-10)
    assert np.allclose(n, F_q(st.q_s, 0.0, h))


def test_perturbed_fixed_point_constant_input(sp):
    d = sample_disorder(5, 4, 0)
    st = TapState(1, np.zeros(4), None, None, None, 0.4, 0.0, 0.6, 0.0)
    h, _ = perturbed_fixed_point(d, sp.params, st, -1.0)  # y = kappa + 1 everywhere
    assert np.ptp(h) == 0.0
    assert np.allclose(L(0.4, 0.0, h), 1.0, atol=1e-10)


def test_perturbation_cube():
    v = perturbation_vector(1000, 0.3, 1)
    assert v.min() >= 0 and v.max() <= 0.3 / math.exp(1 / 0.09)


def test_kim_roche_block_sizes():
    assert kr_block_sizes(2000, 0.3) == [4, 1]


def test_kim_roche_trivial_target():
    d_hat = sample_disorder(100, 5, 1)
    run = kim_roche(d_hat, np.full(100, 1e6), 0.3, N=1000)
    assert run.success and run.stage_stop == 0
    assert run.deficit_norms == [0.0]


def test_kim_roche_reduces_deficit():
    M, N, delta = 2000, 2401, 0.3
    wins = 0
    for seed in range(10):
        z = base_case_target(M, N, delta, 0.0, seed)
        d_hat = sample_disorder(M, 5, seed + 10 ** 6)
        run = kim_roche(d_hat, z, delta, N=N)
        assert isinstance(run, KimRocheRun)
        if run.success:
            wins += 1
            assert all(b < a for a, b in zip(run.deficit_norms, run.deficit_norms[1:]))
    assert wins >= 1


def test_kim_roche_warns_on_oversized_block():
    d_hat = sample_disorder(100, 50, 1)
    with pytest.warns(UserWarning):
        kim_roche(d_hat, np.zeros(100), 0.3, N=100)
