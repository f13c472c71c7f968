import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from riccilab.errors import GridMismatchError, InvalidStateError
from riccilab.geometry import (
    GridSpec,
    HomothetyState,
    ProductState,
    RadialState,
    TorusState,
    ball_volume,
    geodesic_distance,
    integrate,
    laplace_beltrami,
)
from riccilab.geometry.states import cn, sn


@pytest.fixture(scope="module")
def cigar():
    g = GridSpec.radial(400, 10.0)
    return RadialState(-0.5 * np.log1p(g.r**2), g)


def test_grid_validation():
    with pytest.raises(InvalidStateError):
        GridSpec.periodic(8)
    with pytest.raises(InvalidStateError):
        GridSpec.radial(64, -1.0)
    with pytest.raises(InvalidStateError):
        GridSpec.radial(64, 1.0, "cubic")


def test_state_rejects_nonfinite_and_wrong_shape():
    g = GridSpec.periodic(32)
    phi = np.zeros(g.shape)
    phi[3, 3] = np.nan
    with pytest.raises(InvalidStateError):
        TorusState(phi, g)
    with pytest.raises((InvalidStateError, GridMismatchError)):
        TorusState(np.zeros((16, 16)), g)


def test_cigar_curvature_second_order():
    errs = []
    for n in (200, 400, 800):
        g = GridSpec.radial(n, 10.0)
        R = RadialState(-0.5 * np.log1p(g.r**2), g).curvature().R
        errs.append(np.abs(R - 4 / (1 + g.r**2))[:-1].max())
    assert errs[-1] < 1e-3
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_cigar_distance(cigar):
    assert np.abs(cigar.radial_distance() - np.arcsinh(cigar.r)).max() < 1e-4


def test_cigar_ball_volume(cigar):
    for rho in (1.0, 2.0):
        exact = quad(lambda r: 2 * np.pi * r / (1 + r * r), 0, np.sinh(rho))[0]
        assert ball_volume(cigar, (0.0, 0.0), rho) == pytest.approx(exact, rel=2e-2)


def test_flat_torus_distance_and_wrap():
    T = TorusState.flat(128)
    assert geodesic_distance(T, (0, 0), (0.3, 0.4)) == pytest.approx(0.5, rel=1e-2)
    # the short way round
    assert geodesic_distance(T, (0.05, 0.5), (0.95, 0.5)) == pytest.approx(0.1, rel=2e-2)


def test_conformal_scaling_of_distance():
    T = TorusState.flat(128)
    d = geodesic_distance(T, (0, 0), (0.3, 0.4))
    assert geodesic_distance(T.scaled(4.0), (0, 0), (0.3, 0.4)) == pytest.approx(2 * d, rel=1e-10)


def test_homothety_curvature():
    for K0, c in ((-1.0, 1.0), (-1.0, 3.0), (1.0, 2.0)):
        H = HomothetyState(2, K0, c)
        assert np.allclose(H.curvature().R, 2 * K0 / c)
        assert H.curvature().sup_rm == pytest.approx(abs(K0) / c)


@given(st.floats(-2, 2), st.floats(0.01, 1.5))
@settings(max_examples=50)
def test_sn_cn_identity(K, rho):
    # sn' = cn and cn^2 + K sn^2 = 1
    s, c = sn(K, rho), cn(K, rho)
    assert c * c + K * s * s == pytest.approx(1.0, abs=1e-9)
    eps = 1e-6
    assert (sn(K, rho + eps) - sn(K, rho - eps)) / (2 * eps) == pytest.approx(c, rel=1e-5, abs=1e-8)


def test_radial_laplacian_of_r_squared():
    g = GridSpec.radial(200, 5.0)
    S = RadialState(np.zeros(200), g)
    lap = laplace_beltrami(S, g.r**2)
    assert np.abs(lap[:-2] - 4).max() < 1e-8


def test_torus_laplacian_eigenfunction():
    g = GridSpec.periodic(64, 1.0)
    X, Y = g.xy
    v = np.sin(2 * np.pi * X)
    lap = laplace_beltrami(TorusState(np.zeros(g.shape), g), v)
    assert np.abs(lap + 4 * np.pi**2 * v).max() < 4 * np.pi**2 * 2e-3


def test_integrate_volume_of_conformal_torus():
    g = GridSpec.periodic(64, 1.0)
    S = TorusState(np.full(g.shape, 0.5 * np.log(3.0)), g)
    assert integrate(S, np.ones(g.shape)) == pytest.approx(3.0, rel=1e-12)


def test_flat_hessian_of_half_r_squared():
    g = GridSpec.radial(200, 5.0)
    S = RadialState(np.zeros(200), g)
    H = S.hessian(0.5 * g.r**2)
    I = S.metric_tensor()
    assert np.abs((H.components - I.components))[..., :-2].max() < 1e-8


def test_product_dimension_and_curvature():
    P = ProductState(TorusState.flat(32), 2, 1.0)
    assert P.dim == 4
    assert P.curvature().sup_rm == 0
    with pytest.raises(InvalidStateError):
        ProductState(P, 1)
