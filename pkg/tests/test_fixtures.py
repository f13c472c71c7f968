import numpy as np
import pytest

from riccilab.errors import ConfigError
from riccilab.fixtures import REGISTRY, fixture_trace, get_fixture, list_fixtures

SMALL = {
    "flat-torus": {"n": 16},
    "flat-plane": {"n": 32},
    "sine-torus": {"n": 16},
    "cigar": {"n": 64},
    "cone": {"n": 64},
    "hyperbolic-homothety": {"n": 32},
    "sphere-homothety": {"n": 32},
    "expander": {},
    "flat-product": {"n": 16},
}


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_every_fixture_builds(name):
    fx = get_fixture(name)
    st = fx.state(**SMALL[name])
    assert st.backend == fx.backend
    assert np.isfinite(st.curvature().sup_rm)


def test_in_hypothesis_fixtures_are_positively_curved():
    for name in ("cone", "expander"):
        assert get_fixture(name).in_hypothesis
        K = get_fixture(name).state(**SMALL[name]).curvature()
        # the outermost node of a coarse grid carries a tiny boundary artefact
        assert K.R.min() > -1e-6 * K.R.max()


def test_unknown_names_and_parameters():
    with pytest.raises(ConfigError) as exc:
        get_fixture("torus-of-doom")
    assert exc.value.path == "initial.fixture"
    with pytest.raises(ConfigError) as exc:
        get_fixture("cone").state(nn=3)
    assert exc.value.path == "initial.params"


def test_fixture_traces():
    tr = fixture_trace("flat-plane", 2.0, {"n": 32})
    assert tr.t_end == 2.0
    tr = fixture_trace("hyperbolic-homothety", 2.0, {"n": 32}, snapshots=5)
    assert len(tr) == 5 and tr.state_at(2.0).c == pytest.approx(5.0)
    tr = fixture_trace("expander", 1.0, {"t_fixture": 0.0}, snapshots=3)
    assert tr.potential is not None
    tr = fixture_trace("sine-torus", 0.01, {"n": 16})
    assert tr.t_end == pytest.approx(0.01)


def test_listing_is_sorted():
    lines = list_fixtures()
    assert [ln.split()[0] for ln in lines] == sorted(REGISTRY)
