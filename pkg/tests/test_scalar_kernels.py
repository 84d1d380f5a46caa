import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact.scalar_kernels import (L, L_inverse, Phibar, ee, ee_deriv, log_Phibar, phi,
                                     trunc_moments)


def test_phi_and_phibar_at_zero():
    assert phi(0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-15)
    assert Phibar(0.0) == pytest.approx(0.5, abs=1e-16)


@given(st.floats(-30, 30))
def test_phibar_symmetry(x):
    assert Phibar(x) + Phibar(-x) == pytest.approx(1.0, abs=1e-15)


def test_log_phibar_far_tail_is_finite():
    x = np.array([40.0, 100.0, 1e3])
    assert np.all(np.isfinite(log_Phibar(x)))
    # log Phibar(x) ~ -x^2/2 - log(x sqrt(2 pi))
    assert log_Phibar(100.0) == pytest.approx(-5000 - math.log(100 * math.sqrt(2 * math.pi)),
                                             rel=1e-6)


def test_mills_ratio_at_zero_and_bounds():
    assert ee(0.0) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-15)
    x = 5.0
    gap = ee(x) - x
    assert 1 / (x + 2 / x) < gap < 1 / (x + 2 / (x + 3 / x))


@given(st.floats(-38.0, 60))
@settings(max_examples=200)
def test_mills_ratio_exceeds_argument(x):
    assert ee(x) > max(x, 0.0)


def test_mills_ratio_underflows_to_zero_far_left():
    assert ee(-50.0) == 0.0


def test_mills_derivative():
    assert ee_deriv(0.0, 1) == pytest.approx(2 / math.pi, abs=1e-14)
    h = 1e-5
    fd = (ee(1.3 + h) - ee(1.3 - h)) / (2 * h)
    assert ee_deriv(1.3, 1) == pytest.approx(fd, abs=1e-6)


def test_trunc_moments_at_zero():
    m = trunc_moments(0.0)
    assert m.second == pytest.approx(1.0, abs=1e-15)
    assert m.abs_first == pytest.approx(math.sqrt(2 / math.pi), abs=1e-15)


def test_L_at_origin_and_round_trip():
    assert L(0.0, 0.0, 0.0) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-14)
    h = L_inverse(0.5, 0.0, 1.0)
    assert L(0.5, 0.0, h) == pytest.approx(1.0, abs=1e-12)


@given(st.floats(0.05, 0.95), st.floats(0.1, 8.0))
@settings(max_examples=50, deadline=None)
def test_L_inverse_round_trip_property(q, y):
    assert L(q, 0.0, L_inverse(q, 0.0, y)) == pytest.approx(y, abs=1e-10)
