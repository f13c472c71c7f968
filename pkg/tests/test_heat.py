import numpy as np
import pytest

from riccilab.errors import DomainError, TraceWindowError
from riccilab.fixtures import get_fixture
from riccilab.flow import StepPolicy, run_flow
from riccilab.geometry import GridSpec, RadialState, TorusState
from riccilab.heat import (
    delta_init,
    flat_kernel,
    grid_spacing,
    propagate,
    solve_conjugate_kernel,
    solve_forward_heat,
    static_trace,
)


@pytest.fixture(scope="module")
def plane():
    g = GridSpec.radial(400, 30.0)
    return RadialState(np.zeros(400), g)


def test_delta_has_unit_mass_and_minimum_width(plane):
    h = grid_spacing(plane)
    u = delta_init(plane, (0, 0), 3 * h)
    assert plane.integrate(u) == pytest.approx(1.0, rel=1e-13)
    with pytest.raises(DomainError):
        delta_init(plane, (0, 0), 1.5 * h)


def test_radial_forward_kernel_is_gaussian(plane):
    sol = solve_forward_heat(static_trace(plane, 0, 1), (0, 0), 0.0, 3 * grid_spacing(plane), store_times=[0.25, 1.0])
    for t in (0.25, 1.0):
        G = flat_kernel(plane.r, t)
        assert np.abs(sol.u[sol.index(t)] - G).max() / G.max() < 1e-2


def test_conjugate_kernel_is_backward_gaussian(plane):
    tr = static_trace(plane, 0, 4)
    sol = solve_conjugate_kernel(tr, (0, 0), 4.0, 3 * grid_spacing(plane), t_stop=1.0, store_times=[1.0, 3.0])
    for t in (1.0, 3.0):
        G = flat_kernel(plane.r, 4.0 - t)
        assert np.abs(sol.u[sol.index(t)] - G).max() / G.max() < 1e-2
    assert np.abs(sol.mass - 1).max() < 1e-12


def test_torus_kernel_conserves_mass_and_wraps():
    g = GridSpec.periodic(64, 4.0)
    st = TorusState(np.zeros(g.shape), g)
    sol = solve_forward_heat(static_trace(st, 0, 2), (0.1, 0.1), 0.0, 3 * g.h, store_times=[2.0])
    assert sol.mass[-1] == pytest.approx(1.0, abs=1e-12)
    u = sol.u[-1]
    # the mass spills across the periodic seam symmetrically
    assert u[0, 1] == pytest.approx(u[1, 0], rel=1e-10)


def test_conjugate_mass_on_evolving_torus():
    st = get_fixture("sine-torus").state(n=48)
    tr = run_flow(st, 0.02, StepPolicy(save_every=0.002))
    sol = solve_conjugate_kernel(tr, (0.5, 0.5), 0.02, 3 * st.h, t_stop=0.0, n_store=5)
    assert np.abs(sol.mass - 1).max() < 1e-10


def test_forward_mass_nonincreasing_on_positive_curvature():
    st = get_fixture("cone").state(n=300)
    tr = run_flow(st, 1.0, StepPolicy(save_every=0.05))
    sol = solve_forward_heat(tr, (0, 0), 0.0, 3 * grid_spacing(st), n_store=10)
    assert np.all(np.diff(sol.mass) <= 1e-12)


def test_direction_and_window_errors(plane):
    tr = static_trace(plane, 0, 1)
    u0 = delta_init(plane, (0, 0), 3 * grid_spacing(plane))
    with pytest.raises(TraceWindowError):
        propagate(tr, u0, 0.5, 0.2, "forward")
    with pytest.raises(TraceWindowError):
        propagate(tr, u0, 0.5, 2.0, "forward")
    with pytest.raises(TraceWindowError):
        solve_conjugate_kernel(tr, (0, 0), 2.0, 3 * grid_spacing(plane))


def test_interpolated_access(plane):
    sol = solve_forward_heat(static_trace(plane, 0, 1), (0, 0), 0.0, 3 * grid_spacing(plane), store_times=[0.5, 1.0])
    mid = sol.u_at(0.75)
    assert np.allclose(mid, 0.5 * (sol.u[sol.index(0.5)] + sol.u[sol.index(1.0)]))
    with pytest.raises(TraceWindowError):
        sol.index(0.7)
