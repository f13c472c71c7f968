"""Forward heat and conjugate heat kernels on an evolving metric.

Both solvers use SSPRK3, which preserves positivity whenever each stage's
forward-Euler step does (``dt <= min M/diag L``). The conjugate equation
``d_tau u = Delta u - R u`` is advanced in density form ``m = M u``, for
which ``d_tau m = L(m/M)``: the change of the volume form supplies the
``-R u`` term and ``1^T L = 0`` makes the total mass exactly conserved.

Delta data is a geodesic Gaussian ``exp(-d^2/width^2)``, the flat kernel at
delay ``tau_w = width^2/4``; integration therefore starts ``tau_w`` after
(or before, for the conjugate direction) the anchor time.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError, StabilityError, TraceWindowError
from .flow import FlowTrace
from .geometry import HomothetyState, ProductState, RadialState, TorusState
from .geometry.distance import _radial_profile

_TINY = np.finfo(float).tiny
_SAFETY = 0.9


def static_trace(state, t0, t1):
    """A trace holding ``state`` unchanged over ``[t0, t1]``."""
    return FlowTrace([_at(state, t0), _at(state, t1)], label="static")


def _at(state, t):
    if isinstance(state, ProductState):
        return ProductState(_at(state.base, t), state.m, state.flat_extent)
    return state.replace(t=t)


def _base(state):
    return state.base if isinstance(state, ProductState) else state


def grid_spacing(state):
    """Geodesic length of one grid step at the anchor point of delta data."""
    st = _base(state)
    if isinstance(st, TorusState):
        return st.h * float(np.exp(st.phi.min()))
    if isinstance(st, RadialState):
        return float(st.grid.dr_dxi(0.0) * st.grid.h * np.exp(st.phi[0]))
    if isinstance(st, HomothetyState):
        return float(np.sqrt(st.c) * st.grid.dr_dxi(0.0) * st.grid.h)
    raise TypeError(type(state).__name__)


def _distance_sq_from(state, x0):
    st = _base(state)
    if isinstance(st, TorusState):
        x0 = st.wrap(np.asarray(x0, dtype=float)[:2])
        L = np.array(st.grid.extent)
        X, Y = st.grid.xy
        dx = X - x0[0]
        dy = Y - x0[1]
        dx -= L[0] * np.rint(dx / L[0])
        dy -= L[1] * np.rint(dy / L[1])
        return np.exp(2.0 * st.sample(st.phi, x0)) * (dx * dx + dy * dy)
    if isinstance(st, RadialState):
        if st.radius_of(np.asarray(x0, dtype=float)[:2]) != 0.0:
            raise DomainError("radial kernels are anchored at the origin")
        D, _ = _radial_profile(st)
        return D * D
    if isinstance(st, HomothetyState):
        if st.base_radius_of(x0) != 0.0:
            raise DomainError("homothety kernels are anchored at the base point")
        return st.c * st.grid.r**2
    raise TypeError(type(state).__name__)


def delta_init(state, x0, width):
    """Unit-mass geodesic Gaussian of the given ``width`` centred at ``x0``."""
    h = grid_spacing(state)
    if not (np.isfinite(width) and width >= 2.0 * h * (1 - 1e-12)):
        raise DomainError(f"delta width {width:.3g} is below two grid spacings ({2 * h:.3g})")
    u = np.exp(-_distance_sq_from(state, x0) / width**2)
    u = np.maximum(u, _TINY)
    return u / state.integrate(u)


# ------------------------------------------------------------- operators
class _Operator:
    """``inv_m`` and stage kernels of ``M(t)^{-1} L`` at a given time."""

    def __init__(self, state):
        st = _base(state)
        self.state = state
        if isinstance(st, TorusState):
            self.kind = "torus"
            self.inv_m = np.ascontiguousarray(1.0 / st.mass_weights())
            self.kappa = None
        elif isinstance(st, RadialState):
            self.kind = "radial"
            self.inv_m = np.ascontiguousarray(1.0 / st.mass_weights())
            self.kappa = st.mesh.kappa
        else:
            n = st.dim
            self.kind = "radial"
            self.inv_m = np.ascontiguousarray(1.0 / st.mass_weights())
            self.kappa = np.ascontiguousarray(st.mesh.kappa * st.c ** (n / 2.0 - 1.0))
        self.dt_max = float(np.min(1.0 / (self.inv_m * self._diag(st))))

    def _diag(self, st):
        if self.kind == "torus":
            return 4.0
        k = self.kappa
        return k + np.concatenate(([0.0], k[:-1]))

    def mass(self):
        return 1.0 / self.inv_m

    def heat_stage(self, u0, u, dt, a, out):
        if self.kind == "torus":
            _kernels.torus_heat_stage(u0, u, self.inv_m, dt, a, out)
        else:
            _kernels.radial_heat_stage(u0, u, self.inv_m, self.kappa, dt, a, out)

    def conjugate_stage(self, m0, m, dt, a, out):
        if self.kind == "torus":
            _kernels.torus_conjugate_stage(m0, m, self.inv_m, dt, a, out)
        else:
            _kernels.radial_conjugate_stage(m0, m, self.inv_m, self.kappa, dt, a, out)


def _is_static(trace):
    if trace.family is not None:
        return False
    first = _base(trace[0])
    for s in trace:
        b = _base(s)
        if isinstance(b, HomothetyState):
            if b.c != first.c:
                return False
        elif not np.array_equal(b.phi, first.phi):
            return False
    return True


class _OperatorSource:
    def __init__(self, trace):
        self.trace = trace
        self.static = _Operator(trace[0]) if _is_static(trace) else None

    def __call__(self, t):
        return self.static if self.static is not None else _Operator(self.trace.state_at(t))


def propagate(trace, u0, t0, t1, direction="forward", store_times=(), safety=_SAFETY):
    """Evolve ``u0`` from ``t0`` to ``t1`` and return ``{t: u}`` at ``store_times``.

    ``direction="forward"`` solves ``u_t = Delta u`` with ``t1 > t0``;
    ``"conjugate"`` solves ``-u_t = Delta u - R u`` with ``t1 < t0``.
    """
    forward = direction == "forward"
    if forward != (t1 > t0) and t1 != t0:
        raise TraceWindowError(f"{direction} solves run {'forward' if forward else 'backward'} in time")
    for t in (t0, t1):
        if not trace.covers(t):
            raise TraceWindowError(f"t={t} outside trace window [{trace.t_start}, {trace.t_end}]")
    ops = _OperatorSource(trace)
    sgn = 1.0 if forward else -1.0
    stops = sorted({float(s) for s in store_times if (s - t0) * sgn >= -1e-14 and (t1 - s) * sgn >= -1e-14} | {t1},
                   key=lambda s: sgn * s)
    op = ops(t0)
    x = np.array(u0, dtype=float) if forward else np.array(u0, dtype=float) * op.mass()
    x = np.ascontiguousarray(x)
    out = {}
    t = float(t0)
    s1 = np.empty_like(x)
    s2 = np.empty_like(x)
    for stop in stops:
        while sgn * (stop - t) > 1e-13 * max(1.0, abs(stop)):
            dt = min(safety * op.dt_max, sgn * (stop - t))
            t_mid, t_end = t + 0.5 * sgn * dt, t + sgn * dt
            op_end = ops(t_end)
            op_mid = ops(t_mid)
            if dt > 1.2 * min(op_end.dt_max, op_mid.dt_max):
                raise StabilityError("metric changes too fast for the positivity step bound")
            if forward:
                op.heat_stage(x, x, dt, 0.0, s1)
                op_end.heat_stage(x, s1, dt, 0.75, s2)
                op_mid.heat_stage(x, s2, dt, 1.0 / 3.0, s1)
            else:
                op.conjugate_stage(x, x, dt, 0.0, s1)
                op_end.conjugate_stage(x, s1, dt, 0.75, s2)
                op_mid.conjugate_stage(x, s2, dt, 1.0 / 3.0, s1)
            x, s1 = s1, x
            np.maximum(x, _TINY, out=x)
            t = t_end if abs(t_end - stop) > 1e-13 * max(1.0, abs(stop)) else stop
            op = op_end if ops.static is None else op
        t = stop
        out[stop] = x.copy() if forward else x * ops(stop).inv_m
    return out


@dataclass
class KernelSolution:
    """Stored samples of a heat or conjugate heat kernel.

    ``times`` is ascending. For ``direction="forward"`` the kernel is
    ``G(x0, t_anchor; ., t)``; for ``"conjugate"`` it is ``G(., t; x0, t_anchor)``.
    """

    trace: FlowTrace
    direction: str
    x0: tuple
    t_anchor: float
    width: float
    times: np.ndarray
    u: list
    mass: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def tau_w(self):
        return self.width**2 / 4.0

    def tau(self, t):
        return (t - self.t_anchor) if self.direction == "forward" else (self.t_anchor - t)

    def state(self, t):
        return self.trace.state_at(t)

    def index(self, t):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise TraceWindowError(f"t={t} is not a stored time")
        return i

    def u_at(self, t):
        """Field at a stored time, or linear interpolation between stored times."""
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise TraceWindowError(f"t={t} outside the stored window")
        j = int(np.searchsorted(self.times, t))
        if j < len(self.times) and abs(self.times[j] - t) <= 1e-12 * max(1.0, abs(t)):
            return self.u[j]
        if j > 0 and abs(self.times[j - 1] - t) <= 1e-12 * max(1.0, abs(t)):
            return self.u[j - 1]
        a, b = self.times[j - 1], self.times[j]
        w = (t - a) / (b - a)
        return (1 - w) * self.u[j - 1] + w * self.u[j]

    def value(self, t, y):
        return self.state(t).sample(self.u_at(t), y)


def _store_grid(t_first, t_last, store_times, n_default):
    if store_times is None:
        return np.linspace(t_first, t_last, n_default + 1)
    return np.asarray(store_times, dtype=float)


def solve_forward_heat(trace, x0, t_start, width, t_end=None, store_times=None, n_store=20):
    """Approximate ``G(x0, t_start; ., t)`` for ``t`` up to ``t_end``."""
    t_end = trace.t_end if t_end is None else t_end
    tau_w = width**2 / 4.0
    t_first = t_start + tau_w
    if t_first >= t_end:
        raise TraceWindowError("trace ends before the delta burn-in")
    if not trace.covers(t_start):
        raise TraceWindowError(f"t_start={t_start} outside trace window")
    u0 = delta_init(trace.state_at(t_first), x0, width)
    stores = _store_grid(t_first, t_end, store_times, n_store)
    stores = stores[(stores >= t_first - 1e-14) & (stores <= t_end + 1e-14)]
    res = propagate(trace, u0, t_first, t_end, "forward", stores)
    res.setdefault(t_first, u0)
    times = np.array(sorted(res))
    u = [res[t] for t in times]
    mass = np.array([trace.state_at(t).integrate(v) for t, v in zip(times, u)])
    return KernelSolution(trace, "forward", tuple(np.atleast_1d(x0).tolist()), float(t_start), float(width), times, u, mass)


def solve_conjugate_kernel(trace, x0, t_sink, width, t_stop=None, store_times=None, n_store=20):
    """Approximate ``G(., t; x0, t_sink)`` for ``t`` down to ``t_stop``."""
    t_stop = trace.t_start if t_stop is None else t_stop
    tau_w = width**2 / 4.0
    t_first = t_sink - tau_w
    if t_first <= t_stop:
        raise TraceWindowError("trace starts after the delta burn-in")
    if not trace.covers(t_sink):
        raise TraceWindowError(f"t_sink={t_sink} outside trace window")
    u0 = delta_init(trace.state_at(t_first), x0, width)
    stores = _store_grid(t_stop, t_first, store_times, n_store)
    stores = stores[(stores <= t_first + 1e-14) & (stores >= t_stop - 1e-14)]
    res = propagate(trace, u0, t_first, t_stop, "conjugate", stores)
    res.setdefault(t_first, u0)
    times = np.array(sorted(res))
    u = [res[t] for t in times]
    mass = np.array([trace.state_at(t).integrate(v) for t, v in zip(times, u)])
    return KernelSolution(trace, "conjugate", tuple(np.atleast_1d(x0).tolist()), float(t_sink), float(width), times, u, mass)


def forward_mass_identity(sol):
    """Residual of ``d/dt int u dv = -int R u dv`` along a forward solution.

    Returns ``(t_mid, d_mass, predicted)`` with the derivative taken by
    centred differences and the prediction by the trapezoid average.
    """
    t = sol.times
    d_mass = np.diff(sol.mass) / np.diff(t)
    pred = []
    for i in range(len(t)):
        st = sol.state(t[i])
        pred.append(-st.integrate(st.curvature().R * sol.u[i]))
    pred = np.array(pred)
    return 0.5 * (t[1:] + t[:-1]), d_mass, 0.5 * (pred[1:] + pred[:-1])


def flat_kernel(r, tau, n=2):
    """Euclidean heat kernel ``(4 pi tau)^{-n/2} exp(-r^2/4 tau)``."""
    return (4.0 * np.pi * tau) ** (-n / 2.0) * np.exp(-np.square(r) / (4.0 * tau))


__all__ = [
    "KernelSolution",
    "delta_init",
    "grid_spacing",
    "propagate",
    "solve_forward_heat",
    "solve_conjugate_kernel",
    "forward_mass_identity",
    "static_trace",
    "flat_kernel",
]
