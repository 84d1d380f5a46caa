import math

import numpy as np
import pytest

from artifact.replica_saddle import (CONSTANTS, ModelParams, P_of_psi, R_of_q, alpha_star,
                                     check_constants, composed_slope, g_surface, h_star,
                                     h_star_entropy, intbyparts_I, solve_saddle)


def test_simple_values():
    assert P_of_psi(0.0) == 0.0
    assert R_of_q(0.0, ModelParams(0.8)) == pytest.approx(2 * 0.8 / math.pi, abs=1e-12)


def test_bad_alpha_rejected():
    with pytest.raises(ValueError):
        ModelParams(-1.0)


def test_saddle_inside_certified_box(sp):
    assert CONSTANTS.q_lb < sp.q_star < CONSTANTS.q_ub
    assert CONSTANTS.psi_lb < sp.psi_star < CONSTANTS.psi_ub
    assert sp.certified


def test_saddle_at_0833(sp_833):
    assert sp_833.q_star == pytest.approx(0.564, abs=5e-4)


def test_saddle_stable_under_tighter_tolerance(sp):
    again = solve_saddle(sp.params, tol=5e-15)
    assert abs(again.q_star - sp.q_star) < 1e-11


def test_free_entropy_at_q_zero():
    a = 0.7
    assert g_surface(ModelParams(a), 0.0, 0.0) == pytest.approx(math.log(2) - a * math.log(2),
                                                                abs=1e-12)


def test_integration_by_parts_identity(sp):
    assert intbyparts_I(sp.q_star, sp.params) == pytest.approx(sp.psi_star * (1 - sp.q_star),
                                                                 abs=1e-9)


def test_two_entropy_forms_agree(sp):
    assert h_star(sp) == pytest.approx(h_star_entropy(sp), abs=1e-10)


def test_at_slope_below_bound(sp):
    q = np.linspace(CONSTANTS.q_lb, CONSTANTS.q_ub, 64)
    assert np.max(composed_slope(q, sp.params)) <= 0.96
    assert sp.at_slope <= 0.96


def test_alpha_star_root():
    br = alpha_star()
    assert CONSTANTS.alpha_lb <= br.lo <= br.hi <= CONSTANTS.alpha_ub
    from artifact.replica_saddle import g_star
    assert abs(g_star(br.mid)) < 1e-8


def test_six_constant_checks_pass():
    checks = check_constants(CONSTANTS)
    assert len(checks) >= 6
    failed = [c.name for c in checks if not c.passed]
    assert not failed
