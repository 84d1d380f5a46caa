import math

import numpy as np
import pytest

from artifact.envelopes import Interval
from artifact.quadrature import integrate_bracket, integrate_gauss, integrate_inner_trunc
from artifact.replica_saddle import P_of_psi, h_star, p_star
from artifact.scalar_kernels import Phibar, ee, log_Phibar

MASS_9 = 1 - 2 * float(Phibar(9.0))


def test_gaussian_normalisation_and_second_moment():
    assert integrate_gauss(lambda z: np.ones_like(z)) == pytest.approx(MASS_9, abs=1e-13)
    assert integrate_gauss(lambda z: z * z) == pytest.approx(1.0, abs=1e-10)


def test_tanh_square_gives_overlap():
    psi = 2.5763513
    val = integrate_gauss(lambda z: np.tanh(math.sqrt(psi) * z) ** 2, -10, 10)
    assert val == pytest.approx(0.56394908, abs=1e-7)


def test_inner_density_normalises():
    val = integrate_inner_trunc(lambda z, u: np.ones_like(z + u), lambda z: 0.7 * z)
    assert val == pytest.approx(MASS_9, abs=1e-10)


def test_inner_mean_is_mills_ratio():
    xi = lambda z: 0.7 * z
    val = integrate_inner_trunc(lambda z, u: xi(z) + u, xi)
    ref = integrate_gauss(lambda z: np.asarray(ee(xi(z))))
    assert val == pytest.approx(ref, abs=1e-9)


def test_energy_at_zero_overlap(sp):
    val = integrate_gauss(lambda z: np.asarray(log_Phibar(sp.gamma * z)), -10, 10)
    ref = p_star(sp) - sp.psi_star * (1 - sp.q_star) / 2
    assert sp.alpha * val == pytest.approx(ref, abs=1e-10)
    assert p_star(sp) == pytest.approx(-0.344, abs=2e-3)


def _unit(params, z):
    return Interval(params["c"].lo * np.ones_like(z), params["c"].hi * np.ones_like(z))


_unit.factors = ("c",)


def test_bracket_budget_on_constant():
    br = integrate_bracket(_unit, ((-9.0, 9.0),), {"c": (1.0, 1.0)}, tol=1e-10, eps_rig=1e-9,
                           weight="gaussian")
    assert br.lo == pytest.approx(MASS_9 - 1e-9 - 1e-10, abs=1e-13)
    assert br.hi == pytest.approx(MASS_9 + 1e-9 + 1e-10, abs=1e-13)


def test_bracket_rejects_undeclared_factor():
    with pytest.raises(ValueError):
        integrate_bracket(_unit, ((-1.0, 1.0),), {"c": (1, 1), "d": (0, 1)})


def test_wider_box_gives_wider_bracket():
    narrow = integrate_bracket(_unit, ((-9.0, 9.0),), {"c": (0.9, 1.1)}, weight="gaussian")
    wide = integrate_bracket(_unit, ((-9.0, 9.0),), {"c": (0.8, 1.2)}, weight="gaussian")
    assert wide.lo < narrow.lo and wide.hi > narrow.hi
