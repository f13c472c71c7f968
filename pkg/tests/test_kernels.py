import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from riccilab import _kernels
from riccilab._kernels import python_impl

ck = _kernels.compiled_impl
needs_ext = pytest.mark.skipif(ck is None, reason="compiled extension not built")

finite = st.floats(-10, 10, allow_nan=False)
square = st.integers(3, 24).flatmap(lambda n: arrays(np.float64, (n, n), elements=finite))
line = st.integers(2, 60).flatmap(lambda n: arrays(np.float64, (n,), elements=finite))


def test_fallback_lap5_of_quadratic():
    # periodic stencil annihilates constants and sums to zero
    u = np.random.default_rng(0).normal(size=(16, 16))
    assert abs(python_impl.lap5(u).sum()) < 1e-12
    assert np.all(python_impl.lap5(np.full((8, 8), 3.0)) == 0)


def test_backend_name():
    assert _kernels.BACKEND in ("cython", "python")


@needs_ext
@settings(max_examples=40, deadline=None)
@given(square)
def test_lap5_matches(u):
    np.testing.assert_allclose(ck.lap5(u), python_impl.lap5(u), rtol=1e-13, atol=1e-12)


@needs_ext
@settings(max_examples=40, deadline=None)
@given(square, st.floats(0.1, 100))
def test_ricci_rhs_matches(phi, inv_h2):
    phi = phi / 10
    np.testing.assert_allclose(ck.ricci_rhs_torus(phi, inv_h2), python_impl.ricci_rhs_torus(phi, inv_h2), rtol=1e-12, atol=1e-9)


@needs_ext
@settings(max_examples=40, deadline=None)
@given(line, st.floats(-5, 5))
def test_flux_apply_matches(u, ghost):
    kappa = np.linspace(0.5, 2.0, len(u))
    np.testing.assert_allclose(ck.flux_apply(u, kappa, ghost), python_impl.flux_apply(u, kappa, ghost), rtol=1e-13, atol=1e-12)


@needs_ext
@pytest.mark.parametrize("a", [0.0, 0.75, 1 / 3])
def test_stages_match(a):
    rng = np.random.default_rng(1)
    n = 32
    u0, u = rng.random((n, n)), rng.random((n, n))
    inv_m = 1 + rng.random((n, n))
    for name in ("torus_heat_stage", "torus_conjugate_stage"):
        o1, o2 = np.empty_like(u), np.empty_like(u)
        getattr(ck, name)(u0, u, inv_m, 0.01, a, o1)
        getattr(python_impl, name)(u0, u, inv_m, 0.01, a, o2)
        np.testing.assert_allclose(o1, o2, rtol=1e-13)
    r0, r = rng.random(50), rng.random(50)
    im, kap = 1 + rng.random(50), rng.random(50)
    for name in ("radial_heat_stage", "radial_conjugate_stage"):
        o1, o2 = np.empty_like(r), np.empty_like(r)
        getattr(ck, name)(r0, r, im, kap, 0.01, a, o1)
        getattr(python_impl, name)(r0, r, im, kap, 0.01, a, o2)
        np.testing.assert_allclose(o1, o2, rtol=1e-13)


def test_pure_python_env_selects_fallback():
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c", "import riccilab._kernels as k; print(k.BACKEND)"],
        env={"RICCILAB_PURE_PYTHON": "1", "PATH": ""},
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "python"
