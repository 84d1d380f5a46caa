import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact.overlap_exponents import (A_fn, B_fn, H_deriv, H_of_A, H_of_lambda, I_s,
                                        OverlapPoint, P_of_lambda, band, ell, ell_at_infinity,
                                        ell_inverse, gamma_entropy, gamma_entropy_at,
                                        lambda_min, pair_algebra, pair_law)
from artifact.overlap_exponents import _cells_from_A
from artifact.replica_saddle import h_star, p_star
from artifact.scalar_kernels import binary_entropy

fields = st.floats(-12.0, 12.0)
tilts = st.floats(1e-3, 1e3)


def test_pair_algebra_at_zero_field():
    for A in (0.3, 1.0, 4.0):
        pa = pair_algebra(0.0, A)
        assert pa.B == pytest.approx(1.0) and pa.S == pytest.approx(1.0)
        assert pa.D == pytest.approx((A - 1) / (A + 1), abs=1e-15)


@given(fields)
def test_correlation_vanishes_at_unit_tilt(H):
    assert pair_algebra(H, 1.0).D == 0.0
    h = 1e-6
    slope = (pair_algebra(H, 1 + h).D - pair_algebra(H, 1 - h).D) / (2 * h)
    u = 1 - math.tanh(H) ** 2
    assert slope == pytest.approx(u * u / 2, abs=1e-8)


@given(fields, tilts)
@settings(max_examples=200)
def test_correlation_inside_band(H, A):
    lo, hi = band(H)
    D = pair_algebra(H, A).D
    assert lo - 1e-15 <= D <= hi + 1e-15
    pair_law(H, D)  # the table is a probability vector


@given(fields)
def test_entropy_of_product_law(H):
    p = (1 + math.tanh(H)) / 2
    assert gamma_entropy(H, 0.0) == pytest.approx(2 * binary_entropy(p), abs=1e-12)


@given(st.floats(-6.0, 6.0))
def test_entropy_at_infinite_tilt(H):
    p = (1 + math.tanh(H)) / 2
    u = 1 - math.tanh(H) ** 2
    assert gamma_entropy(H, u) == pytest.approx(binary_entropy(p), abs=1e-12)
    assert gamma_entropy_at(H, 1e12) == pytest.approx(binary_entropy(p), abs=1e-6)


@given(st.floats(-1.5, 1.5), st.floats(0.05, 20.0))
@settings(max_examples=100)
def test_entropy_stationarity(H, A):
    D = pair_algebra(H, A).D
    lo, hi = band(H)
    h = 1e-4 * min(D - lo, hi - D)
    slope = (gamma_entropy(H, D + h) - gamma_entropy(H, D - h)) / (2 * h)
    assert slope == pytest.approx(-math.log(A) / 2, abs=1e-6)


@given(fields, tilts)
@settings(max_examples=200)
def test_entropy_stationarity_exact_form(H, A):
    # dGamma/dD = -(1/4) log(c_pp c_mm / c_pm^2), evaluated on the accurate cells
    pp, pm, _, mm = (float(c) for c in _cells_from_A(H, A))
    slope = -0.25 * (math.log(pp) + math.log(mm) - 2 * math.log(pm))
    assert slope == pytest.approx(-math.log(A) / 2, abs=1e-6)


def test_overlap_parametrisation(sp):
    assert ell(1.0, sp) == 0.0
    assert ell(1e8, sp) == pytest.approx(1.0, abs=1e-6)
    assert ell_at_infinity(sp) == pytest.approx(1.0, abs=1e-9)
    assert lambda_min(sp) == pytest.approx(-0.424, abs=2e-3)
    A = np.geomspace(1e-3, 1e3, 25)
    assert np.all(np.diff(ell(A, sp)) > 0)


@given(st.floats(-0.42, 0.99))
@settings(max_examples=20, deadline=None)
def test_ell_inverse_round_trip(lam):
    from artifact.replica_saddle import ModelParams, solve_saddle
    sp = _SP.setdefault("sp", solve_saddle(ModelParams(0.8330785995)))
    pt = ell_inverse(lam, sp)
    assert ell(pt.A, sp) == pytest.approx(lam, abs=1e-10)


_SP = {}


def test_entropy_exponent_endpoints(sp):
    assert H_of_lambda(OverlapPoint(0.0, 0.0, 1.0), sp) == pytest.approx(0.0, abs=1e-9)
    assert H_of_A(1e10, sp) == pytest.approx(-h_star(sp), abs=1e-6)
    assert -h_star(sp) == pytest.approx(-0.344, abs=2e-3)
    assert H_deriv(OverlapPoint(0.0, 0.0, 1.0), sp, 1) == 0.0


def test_entropy_exponent_concave(sp):
    for tau in np.linspace(-0.9, 0.9, 13):
        assert H_deriv(OverlapPoint.from_tau(tau, sp), sp, 2) < 0


def test_energy_exponent_identities(sp):
    assert B_fn(0.4, 0.0, sp) == 0.0
    val, s_opt = A_fn(0.0, sp)
    assert val == 0.0 and s_opt == 0.0
    assert P_of_lambda(0.0, sp) == pytest.approx(0.0, abs=1e-9)
    assert P_of_lambda(1.0, sp) == pytest.approx(0.344, abs=2e-3)
    assert P_of_lambda(1.0, sp) == pytest.approx(-p_star(sp), abs=1e-12)


def test_energy_slope_at_origin(sp):
    h = 1e-4
    slope = (B_fn(0.0, h, sp) - B_fn(0.0, -h, sp)) / (2 * h)
    assert slope == pytest.approx(0.0, abs=1e-6)


def test_energy_forms_agree(sp):
    assert I_s(0.3, 0.1, sp, form="gamma") == pytest.approx(I_s(0.3, 0.1, sp, form="xi"),
                                                             abs=1e-9)


def test_minimised_energy_nonpositive(sp):
    for lam in (-0.3, 0.2, 0.7):
        val, _ = A_fn(lam, sp)
        assert val <= 0.0
