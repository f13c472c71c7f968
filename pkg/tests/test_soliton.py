import math

import numpy as np
import pytest

from riccilab.errors import InvalidStateError, ShootingError, TraceWindowError
from riccilab.geometry import GridSpec
from riccilab.soliton import (
    ExpanderProfile,
    HomothetyFamily,
    einstein_homothety_family,
    expander_family,
    solve_expander_profile,
)


@pytest.fixture(scope="module")
def fx():
    return solve_expander_profile(1.0, 1.0)


def test_profile_solves_the_soliton_equation(fx):
    assert fx.residual < 1e-6
    assert fx.profile.curvature(np.array([0.0]))[0] == pytest.approx(0.5, rel=1e-6)
    # the asymptotic cone angle is fixed by R0 sigma
    assert fx.info["cone_beta"] == pytest.approx(0.5)


def test_profile_curvature_positive_and_decaying(fx):
    r = np.geomspace(1e-3, 1e3, 200)
    K = fx.profile.curvature(r)
    # the tail sits at the integrator's noise floor
    assert np.all(K > -1e-9)
    assert np.all(np.diff(K) <= 1e-9)


def test_flat_profile_is_the_gaussian_expander():
    p = ExpanderProfile(0.0, 2.0)
    r = np.linspace(0, 5, 11)
    np.testing.assert_allclose(p.phi(r), 0.0)
    np.testing.assert_allclose(p.f(r), -r**2 / 8.0)


def test_profile_argument_errors():
    with pytest.raises(InvalidStateError):
        ExpanderProfile(-1.0, 1.0)
    with pytest.raises(InvalidStateError):
        ExpanderProfile(1.0, 0.0)
    with pytest.raises(ShootingError):
        ExpanderProfile(1.0, 1.0, r_end=2.0)


def test_grid_too_small_is_rejected():
    with pytest.raises(ShootingError) as exc:
        solve_expander_profile(1.0, 1.0, grid=GridSpec.radial(100, 3.0))
    assert "r_max" in exc.value.diagnostics


def test_expander_family_type3_law(fx):
    fam = expander_family(fx, t_fixture=0.0)
    for t in (0.0, 1.0, 5.0, 20.0):
        K = fam(t).curvature()
        assert K.sup_rm * (1 + t) == pytest.approx(0.5, rel=1e-3)
        assert fam.sup_rm(t) * (1 + t) == pytest.approx(0.5)
    with pytest.raises(TraceWindowError):
        fam(-1.5)


def test_expander_potential_sigma_tracks_time(fx):
    fam = expander_family(fx, t_fixture=0.0)
    _, sigma = fam.potential(2.0)
    assert sigma == pytest.approx(3.0)
    _, sigma = fam.rescaled(4.0).potential(1.0)
    assert sigma == pytest.approx(5.0 / 4.0)


def test_homothety_family_schedule():
    sph = HomothetyFamily(2, 1.0, 1.0)
    assert sph.extinction_time == pytest.approx(0.5)
    assert sph.c(0.25) == pytest.approx(0.5)
    with pytest.raises(TraceWindowError):
        sph(0.6)
    hyp = einstein_homothety_family(3, -1.0, 2.0)
    assert math.isinf(hyp.extinction_time)
    assert hyp.c(1.0) == pytest.approx(6.0)
    assert hyp.potential(1.0)[1] == pytest.approx(6.0 / 4.0)
    r = hyp.rescaled(2.0, 1.0)
    assert r.c(1.0) == pytest.approx(hyp.c(3.0) / 2.0)
    with pytest.raises(InvalidStateError):
        hyp.rescaled(2.0, dilation=2.0)
    with pytest.raises(InvalidStateError):
        HomothetyFamily(2, 1.0, 0.0)
