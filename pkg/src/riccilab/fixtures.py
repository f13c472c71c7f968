"""Named initial data used by scenarios, tests and the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .flow import StepPolicy, run_flow
from .geometry import GridSpec, HomothetyState, ProductState, RadialState, TorusState
from .heat import static_trace


@dataclass(frozen=True)
class Fixture:
    name: str
    summary: str
    backend: str
    in_hypothesis: bool
    build: object
    defaults: dict = field(default_factory=dict)
    exact: bool = False

    def state(self, **params):
        kw = dict(self.defaults)
        unknown = set(params) - set(kw)
        if unknown:
            raise ConfigError(f"unknown parameter(s) for fixture {self.name!r}: {sorted(unknown)}", "initial.params")
        kw.update(params)
        return self.build(**kw)

    def describe(self):
        tag = "in-hypothesis" if self.in_hypothesis else "out-of-hypothesis"
        return f"{self.name:22s} {self.backend:10s} {tag:18s} {self.summary}"


def _flat_torus(n=128, length=20.0):
    return TorusState.flat(n, length)


def _flat_plane(n=512, r_max=12.0):
    return RadialState(np.zeros(n), GridSpec.radial(n, r_max))


def _sine_torus(n=64, length=1.0, amplitude=0.3):
    g = GridSpec.periodic(n, length)
    X, Y = g.xy
    k = 2 * np.pi / length
    return TorusState(amplitude * np.sin(k * X) * np.cos(k * Y), g)


def _cigar(n=400, r_max=10.0):
    g = GridSpec.radial(n, r_max)
    return RadialState(-0.5 * np.log1p(g.r**2), g)


def _cone(n=800, r_max=200.0, scale=4.0):
    # e^{2 phi} = 4 (1 + r^2)^{-1/2}: positive curvature, opens like a cone
    g = GridSpec.radial(n, r_max, "quadratic", scale)
    return RadialState(np.log(2.0) - 0.25 * np.log1p(g.r**2), g)


def _hyperbolic(n=600, extent=14.0, c0=1.0):
    return HomothetyState(2, -1.0, c0, grid=GridSpec.radial(n, extent))


def _sphere(n=400, c0=1.0):
    return HomothetyState(2, 1.0, c0, grid=GridSpec.radial(n, np.pi))


def _expander(R0=1.0, sigma=1.0):
    from .soliton import solve_expander_profile

    return solve_expander_profile(R0, sigma).state


def _flat_product(n=64, length=1.0, m=2):
    return ProductState(TorusState.flat(n, length), m, length)


REGISTRY = {
    f.name: f
    for f in (
        Fixture("flat-torus", "static flat square torus", "torus", False, _flat_torus, {"n": 128, "length": 20.0}),
        Fixture("flat-plane", "flat plane, radial grid", "radial", False, _flat_plane, {"n": 512, "r_max": 12.0}),
        Fixture(
            "sine-torus",
            "conformally perturbed flat torus",
            "torus",
            False,
            _sine_torus,
            {"n": 64, "length": 1.0, "amplitude": 0.3},
        ),
        Fixture("cigar", "steady cigar soliton", "radial", False, _cigar, {"n": 400, "r_max": 10.0}),
        Fixture(
            "cone",
            "positively curved plane opening to a cone",
            "radial",
            True,
            _cone,
            {"n": 800, "r_max": 200.0, "scale": 4.0},
        ),
        Fixture(
            "hyperbolic-homothety",
            "expanding hyperbolic plane c(t) = c0 + 2t",
            "homothety",
            False,
            _hyperbolic,
            {"n": 600, "extent": 14.0, "c0": 1.0},
            exact=True,
        ),
        Fixture(
            "sphere-homothety",
            "shrinking round sphere",
            "homothety",
            False,
            _sphere,
            {"n": 400, "c0": 1.0},
            exact=True,
        ),
        Fixture(
            "expander",
            "rotationally symmetric gradient expander",
            "radial",
            True,
            _expander,
            {"R0": 1.0, "sigma": 1.0},
            exact=True,
        ),
        Fixture("flat-product", "flat T^2 x T^2", "product", False, _flat_product, {"n": 64, "length": 1.0, "m": 2}),
    )
}


def get_fixture(name):
    try:
        return REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown fixture {name!r}", "initial.fixture") from None


def fixture_trace(name, horizon, params=None, policy=None, t_start=0.0, snapshots=41):
    """Flow of a named fixture over ``[t_start, t_start + horizon]``.

    Flat data is returned as a static trace, exact families are sampled at
    ``snapshots`` times and everything else is integrated numerically.
    """
    params = dict(params or {})
    fx = get_fixture(name)
    t1 = t_start + horizon
    if name in ("flat-torus", "flat-plane", "flat-product"):
        return static_trace(fx.state(**params), t_start, t1)
    if name == "expander":
        from .soliton import expander_family, solve_expander_profile

        # t_fixture = sigma makes the family exactly self-similar about t = 0
        t_fixture = params.pop("t_fixture", 0.0)
        kw = dict(fx.defaults)
        kw.update(params)
        fam = expander_family(solve_expander_profile(kw["R0"], kw["sigma"]), t_fixture=t_fixture)
        return fam.trace(t_start, t1, snapshots, label=name)
    if fx.backend == "homothety":
        from .soliton import HomothetyFamily

        st = fx.state(**params)
        fam = HomothetyFamily(st.dim, st.K0, st.c, grid=st.grid)
        return fam.trace(t_start, t1, snapshots, label=name)
    state = fx.state(**params)
    if t_start:
        state = state.replace(t=t_start)
    return run_flow(state, horizon, policy or StepPolicy(save_every=horizon / 40))


def list_fixtures():
    return [REGISTRY[k].describe() for k in sorted(REGISTRY)]
