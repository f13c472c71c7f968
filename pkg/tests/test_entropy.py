import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riccilab.entropy import (
    Wplus_derivative_series,
    centred_derivative,
    compute_Wplus,
    f_from_u,
    flat_kernel_entropy_rate,
    soliton_defect,
    u_from_f,
)
from riccilab.errors import InvalidStateError, MassCheckError
from riccilab.geometry import GridSpec, HomothetyState, RadialState, TorusState
from riccilab.heat import flat_kernel, grid_spacing, solve_forward_heat, static_trace

PLANE = RadialState(np.zeros(800), GridSpec.radial(800, 24.0))


def gaussian_W(sigma, tau, n=2):
    # W+ of the width-tau Gaussian at parameter sigma, by hand
    return n * sigma / (2 * tau) + n / 2 + (n / 2) * np.log(sigma / tau)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(0.5, 2.0))
def test_mismatched_gaussian(tau, ratio):
    sigma = tau * ratio
    u = flat_kernel(PLANE.r, tau)
    W = compute_Wplus(PLANE, u / PLANE.integrate(u), sigma)
    assert W == pytest.approx(gaussian_W(sigma, tau), abs=2e-3)


def test_torus_gaussian_gives_dimension():
    g = GridSpec.periodic(256, 24.0)
    S = TorusState(np.zeros(g.shape), g)
    X, Y = g.xy
    u = flat_kernel(np.hypot(X - 12, Y - 12), 1.0)
    assert compute_Wplus(S, u / S.integrate(u), 1.0) == pytest.approx(2.0, abs=1e-3)


def test_scale_invariance():
    # W+(a^2 g, a^-n u, a^2 sigma) = W+(g, u, sigma)
    u = flat_kernel(PLANE.r, 1.1)
    u = u / PLANE.integrate(u)
    a = 1.7
    big = PLANE.replace(phi=PLANE.phi + np.log(a))
    assert compute_Wplus(big, u / a**2, a * a * 0.8) == pytest.approx(compute_Wplus(PLANE, u, 0.8), abs=1e-10)


def test_mass_and_domain_checks():
    u = flat_kernel(PLANE.r, 1.0)
    with pytest.raises(MassCheckError):
        compute_Wplus(PLANE, 2 * u / PLANE.integrate(u), 1.0)
    with pytest.raises(InvalidStateError):
        compute_Wplus(PLANE, u, -1.0)


@settings(max_examples=30)
@given(st.floats(0.1, 10.0))
def test_f_u_round_trip(sigma):
    f = np.linspace(-2, 5, 800)
    assert np.allclose(f_from_u(PLANE, u_from_f(PLANE, f, sigma), sigma), f, atol=1e-12)


@given(st.floats(0.5, 5.5))
def test_flat_rate_closed_form(s):
    assert flat_kernel_entropy_rate(s) == pytest.approx(18 * 2 / (s * (6 - s) ** 2), rel=1e-12)


def test_centred_derivative_exact_on_quadratics():
    t = np.array([0.0, 0.3, 0.5, 1.1, 1.2, 2.0])
    d = centred_derivative(t, 3 * t**2 - t + 2)
    assert np.allclose(d[1:-1], 6 * t[1:-1] - 1)
    assert np.isnan(d[0]) and np.isnan(d[-1])


def test_flat_expander_potential_has_no_defect():
    # Hess(-r^2/(4 sigma)) = -g/(2 sigma) cancels g/(2 sigma) exactly
    sigma = 1.3
    w = flat_kernel(PLANE.r, 1.0)
    T, integral = soliton_defect(PLANE, -PLANE.r**2 / (4 * sigma), sigma, u=w)
    assert integral < 1e-16
    # the shrinker potential does not solve the expander equation
    _, integral = soliton_defect(PLANE, PLANE.r**2 / (4 * sigma), sigma, u=w)
    assert integral == pytest.approx(2 / sigma**2, rel=1e-3)


def test_homothety_defect_vanishes_at_matched_sigma():
    H = HomothetyState(2, -1.0, 3.0)
    T, _ = soliton_defect(H, 0.0, 1.5)
    assert np.allclose(T.norm_sq(), 0.0)


def test_entropy_series_needs_conjugate_kernel():
    sol = solve_forward_heat(static_trace(PLANE, 0, 1), (0, 0), 0.0, 3 * grid_spacing(PLANE), n_store=4)
    with pytest.raises(InvalidStateError):
        Wplus_derivative_series(sol.trace, sol)
