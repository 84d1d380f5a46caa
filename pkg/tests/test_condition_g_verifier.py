import hashlib
import json
import math

import pytest

from artifact.condition_g_verifier import (GridSpec, ParameterBox, Shared, deriv_bound_cell,
                                           default_grids, expand_grid, lambda_sandwich,
                                           near_one_check, refine_knots, sandwich_at,
                                           second_deriv_bound_cell, subdivided,
                                           tanh_slope_factor_max, value_bound_cell,
                                           verify_condition_g)
from artifact.replica_saddle import CONSTANTS, Constants

# (knot count, first, last, sha256 prefix of the JSON knot list)
GRID_FINGERPRINTS = {
    "A_value_pos": (116, 0.24, 0.99, "f989a62bf9f8af51"),
    "A_value_neg": (133, -1.0, -0.18, "ecad28028d78ca0a"),
    "B_first_deriv_pos": (56, 0.06, 0.26, "e962d9b190ac0dbe"),
    "B_first_deriv_neg": (27, -0.19, -0.03, "50460d3403a54af3"),
    "C_second_deriv_neg": (9, -0.043, 0.0, "32e214ed993726a5"),
    "C_second_deriv_pos": (9, 0.0, 0.078, "3a5498cef1d7922e"),
}


@pytest.fixture(scope="module")
def shared():
    return Shared.build()


def test_grid_checksums():
    grids = default_grids()
    assert set(grids) == set(GRID_FINGERPRINTS)
    for name, (n, first, last, digest) in GRID_FINGERPRINTS.items():
        knots = list(grids[name].knots)
        assert (len(knots), knots[0], knots[-1]) == (n, first, last), name
        assert hashlib.sha256(json.dumps(knots).encode()).hexdigest()[:16] == digest, name


def test_grid_expansion_is_inclusive_and_exact():
    assert expand_grid([(0.24, 0.25, 0.002)]) == [0.24, 0.242, 0.244, 0.246, 0.248, 0.25]
    assert expand_grid([(0.1, 0.2, 0.05), (0.2, 0.3, 0.1)]) == [0.1, 0.15, 0.2, 0.3]
    assert refine_knots([0.0, 1.0], 4) == [0.0, 0.25, 0.5, 0.75, 1.0]
    with pytest.raises(ValueError):
        GridSpec("x", (0.0, -0.1), "nonneg")


def test_sandwich_at_origin_is_exact():
    s = sandwich_at(0.0, ParameterBox.from_constants())
    assert s.lam_lb == s.lam_ub == 0.0


def test_sandwich_contains_point_value(sp):
    from artifact.overlap_exponents import A_of_tau, ell
    box = ParameterBox.from_constants()
    for tau in (-0.9, -0.3, 0.2, 0.8, 0.99):
        s = sandwich_at(tau, box)
        assert s.lam_lb <= ell(A_of_tau(tau), sp) <= s.lam_ub
        # the bracket width is set by the q box, far below 1e-8
        assert s.gap < 1e-8


def test_widening_box_widens_sandwich():
    narrow = sandwich_at(0.5, ParameterBox.from_constants())
    wide = sandwich_at(0.5, ParameterBox.from_constants(psi_widen=1e-3))
    assert wide.lam_lb <= narrow.lam_lb and wide.lam_ub >= narrow.lam_ub


def test_lambda_sandwich_rejects_mixed_sign_cell():
    with pytest.raises(ValueError):
        lambda_sandwich(-0.1, 0.1)


def test_value_cell_passes(shared):
    r = value_bound_cell(0.24, 0.241, "SP", shared)
    assert r.passed and r.bound_value.hi < 0
    r = value_bound_cell(-0.181, -0.18, "SQ", shared)
    assert r.passed


def test_one_piece_cell_fails(shared):
    assert not value_bound_cell(0.24, 0.99, "SP", shared).passed


def test_direction_pinning_keeps_pass():
    base = Shared.build()
    r = value_bound_cell(0.5, 0.51, "SP", base)
    for side in ("lo", "hi"):
        pinned = Shared.build(base.box.pinned("q", side))
        rp = value_bound_cell(0.5, 0.51, "SP", pinned)
        assert rp.passed
        assert rp.bound_value.hi <= r.bound_value.hi + 1e-12


def test_derivative_cells(shared):
    assert deriv_bound_cell(0.1, 0.103, "want_negative", shared).passed
    single = deriv_bound_cell(-0.19, -0.185, "want_positive", shared)
    split = subdivided(lambda a, b: deriv_bound_cell(a, b, "want_positive", shared), -0.19, -0.185)
    # single envelopes are too loose on the negative side; bisection closes it
    assert not single.passed
    assert split.passed and split.components["leaves"] > 1


def test_second_derivative_cell(shared):
    assert second_deriv_bound_cell(0.0, 0.007, shared).passed
    assert tanh_slope_factor_max() < 1 / math.sqrt(2)


def test_near_one_chain(shared):
    r = near_one_check(shared)
    assert r.passed and r.bound_value.hi < 0
    assert r.components["iota(100) > 0.025"] > 0.025


def test_widened_psi_box_fails():
    rep = verify_condition_g(psi_widen=0.1, parts=("A",), fail_fast=True)
    assert not rep.verdict and rep.first_failure


def test_partial_run_has_no_verdict():
    rep = verify_condition_g(parts=("C",))
    assert all(c.passed for c in rep.all_cells())
    assert not rep.verdict


def test_constants_out_of_order_rejected():
    with pytest.raises(ValueError):
        Constants(q_lb=0.6)
