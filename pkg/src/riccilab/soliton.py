"""Exact and numerically exact soliton fixtures.

Einstein homotheties ``c(t) g0`` and rotationally symmetric 2D gradient
expanders. Both come as exact families: a callable ``t -> MetricState``
that can be rescaled in time and space and wrapped in a ``FlowTrace``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .errors import InvalidStateError, ShootingError, TraceWindowError
from .flow import FlowTrace, run_flow, StepPolicy
from .geometry import GridSpec, HomothetyState, RadialState

__all__ = [
    "HomothetyFamily",
    "ExpanderProfile",
    "ExpanderFamily",
    "SolitonFixture",
    "einstein_homothety_family",
    "solve_expander_profile",
    "expander_family",
    "self_similarity_error",
]


class _Family:
    """Exact flow ``g_(tau, t0, a)(s) = tau^-1 D_a^* g(t0 + s tau)`` of a base family.

    ``D_a`` is the coordinate dilation ``x -> a x``.
    """

    tau = 1.0
    t_offset = 0.0
    dilation = 1.0

    def physical_time(self, s):
        return self.t_offset + s * self.tau

    def trace(self, t0, t1, n=11, label=""):
        if not t1 > t0:
            raise TraceWindowError("need t1 > t0")
        times = np.linspace(t0, t1, int(n))
        return FlowTrace([self(t) for t in times], family=self, potential=self.potential, label=label)

    def _compose(self, tau, t_offset, dilation):
        return (
            self.tau * tau,
            self.t_offset + t_offset * self.tau,
            self.dilation * dilation,
        )


class HomothetyFamily(_Family):
    """``c(t) = c0 - 2 K0 (n-1) t`` times the model metric of curvature ``K0``."""

    def __init__(self, n, K0, c0=1.0, grid=None, tau=1.0, t_offset=0.0):
        if not c0 > 0:
            raise InvalidStateError("c0 must be positive")
        self.n, self.K0, self.c0 = int(n), float(K0), float(c0)
        self.grid = grid
        self.tau, self.t_offset = float(tau), float(t_offset)

    @property
    def rate(self):
        return -2.0 * self.K0 * (self.n - 1)

    @property
    def extinction_time(self):
        """Physical extinction time, or ``inf`` when the family is immortal."""
        return self.c0 / -self.rate if self.rate < 0 else math.inf

    def c(self, s):
        return (self.c0 + self.rate * self.physical_time(s)) / self.tau

    def sup_rm(self, s):
        return abs(self.K0) / self.c(s)

    def __call__(self, s):
        c = self.c(s)
        if not c > 0:
            raise TraceWindowError(f"the family is extinct at t={s}")
        return HomothetyState(self.n, self.K0, c, s, self.grid)

    def potential(self, s):
        """Constant potential and the ``sigma`` making the defect vanish (K0 < 0)."""
        st = self(s)
        f = np.zeros(st.shape) if st.mesh is not None else np.asarray(0.0)
        sigma = st.c / (2.0 * (self.n - 1) * -self.K0) if self.K0 < 0 else math.inf
        return f, sigma

    def rescaled(self, tau, t_offset=0.0, dilation=1.0):
        if dilation != 1.0:
            raise InvalidStateError("model-space grids are geodesic; dilation must be 1")
        tau_n, off, _ = self._compose(tau, t_offset, 1.0)
        return HomothetyFamily(self.n, self.K0, self.c0, self.grid, tau_n, off)


def einstein_homothety_family(n, K0, c0=1.0, grid=None):
    return HomothetyFamily(n, K0, c0, grid)


# ------------------------------------------------------------------ expanders
class ExpanderProfile:
    """Conformal factor ``phi0(r)`` and potential ``f0(r)`` of a 2D expander.

    Solves ``Rc + Hess f + g/(2 sigma) = 0`` for ``g = e^{2 phi}(dr^2 + r^2 dth^2)``.
    The trace-free part forces ``f' = C r e^{2 phi}`` and the trace gives::

        phi'' + phi'/r = e^{2 phi} (C (1 + r phi') + 1/(2 sigma)),

    with ``C = -R0/2 - 1/(2 sigma)`` fixed by smoothness at the origin.
    Beyond ``r_end`` the metric is an exact cone ``phi ~ (beta-1) log r``.
    """

    def __init__(self, R0, sigma, r_start=1e-4, r_end=None, decay=1e-13):
        if R0 < 0:
            raise InvalidStateError("the expander family here has R0 >= 0")
        if not sigma > 0:
            raise InvalidStateError("sigma must be positive")
        self.R0, self.sigma = float(R0), float(sigma)
        self.C = -0.5 * self.R0 - 0.5 / self.sigma
        self.beta = 1.0 / (1.0 + self.R0 * self.sigma)
        self.flat = R0 == 0
        if self.flat:
            self.r_end = math.inf
            return
        C, s = self.C, self.sigma

        def rhs(x, y):
            # x = log r, p = r phi'
            phi, p, f = y
            w = math.exp(2.0 * x + 2.0 * phi)
            return [p, w * (C * (1.0 + p) + 0.5 / s), C * w]

        def decayed(x, y):
            return abs(C * (1.0 + y[1]) + 0.5 / s) - decay * self.R0

        decayed.terminal = True
        decayed.direction = -1
        x_hi = math.log(r_end) if r_end else math.log(1e8)
        r0 = r_start
        y0 = [-self.R0 * r0**2 / 8, -self.R0 * r0**2 / 4, C * r0**2 / 2]
        sol = solve_ivp(rhs, [math.log(r0), x_hi], y0, method="DOP853", rtol=1e-13, atol=1e-15,
                        dense_output=True, events=None if r_end else decayed)
        if sol.status < 0:
            raise ShootingError("profile integration failed", {"message": sol.message})
        k_end = abs(C * (1.0 + sol.y[1, -1]) + 0.5 / s)
        if k_end > 1e-3 * self.R0:
            raise ShootingError(
                "curvature does not decay", {"r_end": math.exp(sol.t[-1]), "K_end": k_end, "R0": self.R0}
            )
        self.r_start = r0
        self.r_end = math.exp(sol.t[-1])
        self._end = sol.y[:, -1].copy()
        # Hermite interpolation with exact slopes is far cheaper than dense output
        x = np.linspace(sol.t[0], sol.t[-1], 40001)
        phi, p, f = sol.sol(x)
        w = np.exp(2.0 * x + 2.0 * phi)
        self._phi = CubicHermiteSpline(x, phi, p)
        self._p = CubicHermiteSpline(x, p, w * (C * (1.0 + p) + 0.5 / s))
        self._f = CubicHermiteSpline(x, f, C * w)

    def _eval(self, r):
        r = np.asarray(r, dtype=float)
        shape = r.shape
        r = r.ravel()
        phi = np.empty_like(r)
        p = np.empty_like(r)
        f = np.empty_like(r)
        if self.flat:
            return (np.zeros(shape), np.zeros(shape), (self.C * r * r / 2).reshape(shape))
        lo = r < self.r_start
        hi = r > self.r_end
        mid = ~(lo | hi)
        if np.any(mid):
            x = np.log(r[mid])
            phi[mid], p[mid], f[mid] = self._phi(x), self._p(x), self._f(x)
        if np.any(lo):
            q = r[lo] ** 2
            phi[lo] = -self.R0 * q / 8
            p[lo] = -self.R0 * q / 4
            f[lo] = self.C * q / 2
        if np.any(hi):
            pe, _, fe = self._end
            b1 = self.beta - 1.0
            rr = r[hi]
            phi[hi] = pe + b1 * np.log(rr / self.r_end)
            p[hi] = b1
            amp = self.C * math.exp(2 * pe) * self.r_end ** (-2 * b1)
            f[hi] = fe + amp * (rr ** (2 * self.beta) - self.r_end ** (2 * self.beta)) / (2 * self.beta)
        return phi.reshape(shape), p.reshape(shape), f.reshape(shape)

    def phi(self, r):
        return self._eval(r)[0]

    def f(self, r):
        return self._eval(r)[2]

    def curvature(self, r):
        """Gauss curvature ``K = R/2``."""
        p = self._eval(r)[1]
        return -(self.C * (1.0 + p) + 0.5 / self.sigma)

    def decay_radius(self, fraction=1e-3):
        """Smallest sampled radius beyond which ``K < fraction * K(0)``."""
        if self.flat:
            return 0.0
        r = np.geomspace(self.r_start, self.r_end, 4000)
        k = self.curvature(r)
        above = np.nonzero(k >= fraction * 0.5 * self.R0)[0]
        return float(r[above[-1] + 1]) if len(above) and above[-1] + 1 < len(r) else float(r[-1])


def _cheb_residual(profile, r_max, degree=32):
    """Largest defect component, with derivatives from piecewise Chebyshev fits."""
    edges = [0.0, min(1.0, r_max)]
    while edges[-1] < r_max:
        edges.append(min(2.0 * edges[-1], r_max))
    worst = 0.0
    nodes = np.cos(np.pi * (np.arange(2 * degree + 1) + 0.5) / (2 * degree + 1))
    probe = np.linspace(-0.98, 0.98, 97)
    for a, b in zip(edges[:-1], edges[1:]):
        half = 0.5 * (b - a)
        r_nodes = a + half * (nodes + 1.0)
        phi_c = cheb.chebfit(nodes, profile.phi(r_nodes), degree)
        f_c = cheb.chebfit(nodes, profile.f(r_nodes), degree)
        x = probe
        r = a + half * (x + 1.0)
        phi = cheb.chebval(x, phi_c)
        d1 = cheb.chebval(x, cheb.chebder(phi_c)) / half
        d2 = cheb.chebval(x, cheb.chebder(phi_c, 2)) / half**2
        f1 = cheb.chebval(x, cheb.chebder(f_c)) / half
        f2 = cheb.chebval(x, cheb.chebder(f_c, 2)) / half**2
        e = np.exp(-2.0 * phi)
        K = -e * (d2 + d1 / r)
        rr = K + e * (f2 - d1 * f1) + 0.5 / profile.sigma
        tt = K + e * (f1 / r + d1 * f1) + 0.5 / profile.sigma
        worst = max(worst, float(np.max(np.abs(rr))), float(np.max(np.abs(tt))))
    return worst


@dataclass
class SolitonFixture:
    """A metric with potential solving ``Rc + Hess f + g/(2 sigma_ref) = 0``.

    ``residual`` is the profile defect (sup over the trust region);
    ``grid_residual`` is the defect of the sampled state under the grid
    operators and only measures discretisation error.
    """

    state: RadialState
    potential: np.ndarray
    sigma_ref: float
    residual: float
    profile: ExpanderProfile
    trust_radius: float
    grid_residual: float = float("nan")
    info: dict = field(default_factory=dict)


def _default_grid(profile):
    r_decay = max(profile.decay_radius(1e-3), 1.0)
    # wide enough that kernels started near the fixture never feel the edge
    r_max = 60.0 * r_decay
    return GridSpec.radial(800, r_max, "quadratic", r_decay)


def solve_expander_profile(R0, sigma_ref=1.0, grid=None):
    """Expander with scalar curvature ``R0`` at the origin, sampled on ``grid``."""
    profile = ExpanderProfile(R0, sigma_ref)
    grid = _default_grid(profile) if grid is None else grid
    if grid.kind != "radial-1d":
        raise InvalidStateError("expander fixtures live on radial grids")
    r = grid.r
    r_max = grid.extent[0]
    state = RadialState(profile.phi(r), grid)
    f = profile.f(r)
    if not profile.flat:
        k_edge = float(profile.curvature(np.array([r_max]))[0])
        if k_edge > 1e-3 * 0.5 * R0:
            raise ShootingError(
                "grid too small for the curvature to decay", {"r_max": r_max, "K_edge": k_edge, "K0": 0.5 * R0}
            )
        residual = _cheb_residual(profile, r_max)
    else:
        residual = 0.0
    from .entropy import soliton_defect

    tensor, _ = soliton_defect(state, f, sigma_ref, u=np.ones(grid.shape))
    inner = r <= 0.5 * r_max
    grid_res = float(np.sqrt(tensor.norm_sq())[inner].max())
    return SolitonFixture(state, f, float(sigma_ref), residual, profile, r_max, grid_res,
                          {"C": profile.C, "cone_beta": profile.beta})


class ExpanderFamily(_Family):
    """Self-similar flow of an expander fixture placed at time ``t_fixture``.

    ``g(t) = c(t) D_lambda^* g0`` with ``c = 1 + (t - t_fixture)/sigma`` and
    ``lambda = c^{C sigma}``; the potential ``f0(lambda r)`` solves the
    soliton equation at ``sigma + t - t_fixture``.
    """

    def __init__(self, fixture, t_fixture=0.0, grid=None, tau=1.0, t_offset=0.0, dilation=1.0):
        self.fixture = fixture
        self.profile = fixture.profile
        self.t_fixture = float(t_fixture)
        self.grid = fixture.state.grid if grid is None else grid
        self.tau, self.t_offset, self.dilation = float(tau), float(t_offset), float(dilation)

    def c_phys(self, t):
        return 1.0 + (t - self.t_fixture) / self.profile.sigma

    def _lam(self, t):
        c = self.c_phys(t)
        if not c > 0:
            raise TraceWindowError(f"the expander family starts after t={t}")
        return c, c ** (self.profile.C * self.profile.sigma) * self.dilation

    def __call__(self, s):
        t = self.physical_time(s)
        c, lam = self._lam(t)
        r = self.grid.r
        phi = 0.5 * math.log(c / self.tau) + self.profile.phi(lam * r) + math.log(lam)
        return RadialState(phi, self.grid, s)

    def potential(self, s):
        t = self.physical_time(s)
        c, lam = self._lam(t)
        return self.profile.f(lam * self.grid.r), self.profile.sigma * c / self.tau

    def rescaled(self, tau, t_offset=0.0, dilation=1.0):
        tau_n, off, a = self._compose(tau, t_offset, dilation)
        return ExpanderFamily(self.fixture, self.t_fixture, self.grid, tau_n, off, a)

    def sup_rm(self, s):
        t = self.physical_time(s)
        return 0.5 * self.profile.R0 * self.tau / self.c_phys(t)


def expander_family(fixture, t_fixture=0.0, grid=None):
    return ExpanderFamily(fixture, t_fixture, grid)


def self_similarity_error(fixture, dt, policy=None):
    """Flow the sampled fixture for ``dt``, undo the scaling and the dilation and
    return the sup difference of conformal factors on the inner half domain."""
    sigma = fixture.sigma_ref
    trace = run_flow(fixture.state, dt, policy or StepPolicy(save_every=dt))
    end = trace[-1]
    c = 1.0 + dt / sigma
    lam = c ** (fixture.profile.C * sigma)
    back = end.phi - 0.5 * math.log(c)
    exact = fixture.profile.phi(lam * end.r) + math.log(lam)
    inner = end.r <= 0.5 * min(end.trust_radius, fixture.trust_radius)
    return float(np.max(np.abs(back - exact)[inner])), trace
