import math

import numpy as np
import pytest

from riccilab.blowdown import (
    build_blowdown_kernel,
    build_blowdown_sequence,
    default_taus,
    entropy_sequence,
    rescale_flow,
    soliton_limit_report,
)
from riccilab.errors import InsufficientRangeError, InvalidStateError, TraceWindowError
from riccilab.geometry import GridSpec, RadialState, TorusState
from riccilab.heat import static_trace
from riccilab.soliton import HomothetyFamily


@pytest.fixture(scope="module")
def plane_seq():
    st = RadialState(np.zeros(300), GridSpec.radial(300, 30.0))
    tr = static_trace(st, 0.0, 24.0)
    return build_blowdown_sequence(tr, (0.0, 0.0), count=3)


def test_default_taus_end_at_the_horizon():
    st = RadialState(np.zeros(50), GridSpec.radial(50, 5.0))
    taus = default_taus(static_trace(st, 0.0, 24.0), count=3)
    np.testing.assert_allclose(taus, [1.0, 2.0, 4.0])


def _mismatched_W(s, n=2):
    # Gaussian of scale tau = 6 - s judged at sigma = s
    tau = 6.0 - s
    return n * s / (2 * tau) + n / 2 + (n / 2) * np.log(s / tau)


def test_flat_blowdown_entropy_is_constant(plane_seq):
    es = entropy_sequence(plane_seq)
    for row in es.W:
        np.testing.assert_allclose(row, _mismatched_W(es.s), atol=2e-3)
    assert es.monotone and es.cauchy


def test_flat_blowdown_potential_is_gaussian(plane_seq):
    bk = plane_seq.kernels[1]
    s = 2.0
    st = bk.trace.state_at(s)
    r = st.r
    inner = r < 5.0
    # sunk at s = 6 so the rescaled kernel has tau = 4
    exact = r**2 / 16.0 + math.log(4 * math.pi * 4.0) - math.log(4 * math.pi * s)
    f = bk.f[s]
    np.testing.assert_allclose(f[inner], exact[inner], atol=5e-3)


def test_flat_limit_is_flagged(plane_seq):
    rep = soliton_limit_report(plane_seq)
    assert not rep.non_flat
    assert any("flat" in fl for fl in rep.flags)
    s = rep.s
    np.testing.assert_allclose(rep.D_kernel, s * (1 / (6 - s) + 1 / s) ** 2, rtol=5e-3)


def test_rescaling_scales_curvature():
    fam = HomothetyFamily(2, -1.0, 1.0, grid=GridSpec.radial(100, 5.0))
    tr = fam.trace(0.0, 16.0, 17)
    tau = 4.0
    sc = rescale_flow(tr, tau)
    for s in (1.0, 2.5, 4.0):
        assert sc.state_at(s).curvature().sup_rm == pytest.approx(tau * tr.state_at(s * tau).curvature().sup_rm)
    with pytest.raises(TraceWindowError):
        rescale_flow(tr, 8.0)
    with pytest.raises(InvalidStateError):
        rescale_flow(tr, -1.0)


def test_numerical_rescaling_maps_nodes():
    st = RadialState(-0.5 * np.log1p(GridSpec.radial(80, 8.0).r ** 2), GridSpec.radial(80, 8.0))
    tr = static_trace(st, 0.0, 8.0)
    sc = rescale_flow(tr, 2.0, gauge=False)
    a = sc.state_at(1.0)
    assert a.grid.extent[0] == pytest.approx(8.0)
    np.testing.assert_allclose(a.phi, st.phi - 0.5 * math.log(2.0))


def test_tau_ratio_and_count_checks(plane_seq):
    with pytest.raises(InvalidStateError):
        build_blowdown_sequence(plane_seq.trace, (0, 0), taus=[1.0, 1.5, 3.0])
    short = type(plane_seq)(plane_seq.trace, plane_seq.x0, plane_seq.taus[:2], 0.0, plane_seq.kernels[:2])
    with pytest.raises(InsufficientRangeError):
        entropy_sequence(short)


def test_blowdown_kernel_mass():
    st = RadialState(np.zeros(400), GridSpec.radial(400, 50.0))
    bk = build_blowdown_kernel(static_trace(st, 0.0, 12.0), 2.0, (0.0, 0.0))
    assert bk.mass_error < 1e-8
    # on the plane f(x0, s) = log((6 - s)/s), which first reaches 0 at s = 3
    assert abs(bk.neg_f_max) < 1e-3


def test_torus_collapse_is_flagged():
    st = TorusState.flat(32, 2.0)
    tr = static_trace(st, 0.0, 24.0)
    seq = build_blowdown_sequence(tr, (1.0, 1.0), count=3)
    rep = soliton_limit_report(seq)
    assert any("collapse" in fl for fl in rep.flags)
