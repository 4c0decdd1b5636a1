import math

import numpy as np
import pytest

from boltzgap.config import OperatorParams
from boltzgap.errors import SingularEvaluationError, UnsupportedCrossSectionError
from boltzgap.kernels import (collision_frequency, cross_section, cross_section_b, maxwellian,
                              nu_closed_form_at_zero, nu_profile, nu_range, sphere_area, sphere_integral_b)
from boltzgap.mesh_basis import build_mesh


def test_maxwellian_normalization():
    assert maxwellian(np.zeros(3)) == pytest.approx((2 * math.pi) ** -1.5)
    assert maxwellian(np.array([1.0, 0.0])) == pytest.approx(math.exp(-0.5) / (2 * math.pi))
    with pytest.raises(ValueError):
        maxwellian(np.zeros(2), d=3)


def test_sphere_area():
    assert sphere_area(1) == pytest.approx(2 * math.pi)
    assert sphere_area(2) == pytest.approx(4 * math.pi)


@pytest.mark.parametrize("d,alpha,normalize", [(3, -2.0, False), (2, -1.0, False), (3, -1.5, True), (2, -0.5, True)])
def test_sphere_integral_of_b_is_one(d, alpha, normalize):
    cs = cross_section(OperatorParams(d=d, gamma=0.0, alpha=alpha, b_normalized=normalize))
    assert sphere_integral_b(cs) == pytest.approx(1.0, rel=1e-12)


def test_sphere_integral_diverges_without_cutoff():
    cs = cross_section(OperatorParams(d=3, gamma=0.0, alpha=0.0))
    with pytest.raises(UnsupportedCrossSectionError):
        sphere_integral_b(cs)


def test_isotropic_b_is_constant():
    cs = cross_section(OperatorParams(d=3, gamma=0.0, alpha=-2.0))
    assert cs.is_constant
    np.testing.assert_allclose(cross_section_b(np.array([1.0, 0.0, -1.0]), cs), 1 / (4 * math.pi))


def test_b_singular_at_grazing():
    cs = cross_section(OperatorParams(d=3, gamma=0.0, alpha=-1.5))
    with pytest.raises(SingularEvaluationError):
        cross_section_b(1.0, cs)
    assert np.isfinite(cross_section_b(0.5, cs))


@pytest.mark.parametrize("d,gamma", [(3, 0.5), (3, -1.0), (2, 0.0), (2, 1.0)])
def test_nu_at_origin_closed_form(d, gamma):
    params = OperatorParams(d=d, gamma=gamma, alpha=-(d - 1.0))
    nu = nu_profile(params, 5.0, table_size=64)
    assert collision_frequency(np.zeros(d), nu) == pytest.approx(nu_closed_form_at_zero(gamma, d), rel=1e-6)
    assert nu.evaluate(np.zeros((1, d)))[0] == pytest.approx(nu_closed_form_at_zero(gamma, d), rel=1e-6)


def test_nu_monotone_for_hard_potentials():
    params = OperatorParams(d=2, gamma=1.0, alpha=-1.0)
    nu = nu_profile(params, 5.0, table_size=128)
    vals = nu.evaluate(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 3.0]]))
    assert vals[0] < vals[1] < vals[2]
    # table and direct quadrature agree away from the origin
    assert vals[2] == pytest.approx(collision_frequency([0.0, 3.0], nu), rel=1e-6)


def test_nu_range_on_mesh():
    params = OperatorParams(d=2, gamma=0.5, alpha=-1.0)
    mesh = build_mesh(3.0, 6, 2)
    lo, hi = nu_range(mesh, nu_profile(params, 3.0, table_size=128))
    assert nu_closed_form_at_zero(0.5, 2) <= lo + 1e-6
    assert lo < hi


def test_nu_needs_cutoff():
    with pytest.raises(UnsupportedCrossSectionError):
        nu_profile(OperatorParams(d=3, gamma=0.0, alpha=0.5), 5.0, table_size=16)


def test_nu_decreasing_for_soft_potentials():
    params = OperatorParams(d=2, gamma=-1.0, alpha=-1.0)
    nu = nu_profile(params, 5.0, table_size=128)
    r = np.linspace(0.0, 7.0, 36)
    vals = nu.evaluate(np.stack([r, np.zeros_like(r)], axis=-1))
    assert np.all(np.diff(vals) < 0)
    # far from the bulk nu follows |v|^gamma
    assert collision_frequency([20.0, 0.0], nu) == pytest.approx(1.0 / 20.0, rel=0.01)


def test_soft_nu_minimum_falls_with_domain():
    params = OperatorParams(d=2, gamma=-1.0, alpha=-1.0)
    lows = []
    for V in (5.0, 10.0, 15.0):
        mesh = build_mesh(V, int(2 * V / 0.5), 2)
        lows.append(nu_range(mesh, nu_profile(params, V, table_size=64))[0])
    assert np.all(np.diff(lows) < 0)
    assert lows[-1] < 1.0 / 15.0
