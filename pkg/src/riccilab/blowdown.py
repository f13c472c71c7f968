"""Blow-down sequences: rescaled flows ``g_k(s) = tau_k^-1 g(t_k + s tau_k)``,
their conjugate kernels sunk at ``s = 6``, the entropies ``W+_k(s)`` and the
soliton-limit diagnostics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .entropy import compute_Wplus, f_from_u, soliton_defect, Wplus_derivative_series
from .errors import InsufficientRangeError, InvalidStateError, TraceWindowError
from .flow import FlowTrace, fit_type3_constant, monitor_noncollapse
from .geometry import GridSpec, HomothetyState, ProductState, RadialState, TorusState
from .geometry.states import sn
from .heat import grid_spacing, solve_conjugate_kernel

__all__ = [
    "rescale_flow",
    "build_blowdown_kernel",
    "build_blowdown_sequence",
    "entropy_sequence",
    "soliton_limit_report",
    "BlowdownKernel",
    "BlowdownSequence",
    "EntropySequence",
    "SolitonLimitReport",
]

SINK = 6.0


# ----------------------------------------------------------------- rescaling
def _dilate_grid(grid, a):
    if a == 1.0:
        return grid
    if grid.kind == "radial-1d":
        return GridSpec.radial(grid.resolution[0], grid.extent[0] / a, grid.stretch, grid.stretch_scale / a)
    return GridSpec.periodic(grid.resolution[0], grid.extent[0] / a)


def _rescale_state(st, tau, a, s):
    """``tau^-1 D_a^* st`` relabelled to time ``s``; grid nodes map onto nodes."""
    if isinstance(st, ProductState):
        return ProductState(_rescale_state(st.base, tau, a, s), st.m, st.flat_extent / math.sqrt(tau))
    if isinstance(st, HomothetyState):
        return HomothetyState(st.dim, st.K0, st.c / tau, s, st.grid)
    shift = math.log(a) - 0.5 * math.log(tau)
    grid = _dilate_grid(st.grid, a)
    if isinstance(st, RadialState):
        return RadialState(st.phi + shift, grid, s, st.trust_radius / a)
    return TorusState(st.phi + shift, grid, s)


def _anchor_phi(st):
    base = st.base if isinstance(st, ProductState) else st
    if isinstance(base, RadialState):
        return float(base.phi[0])
    return None


def rescale_flow(trace, tau, t_offset=0.0, s_range=(1.0, 4.0), gauge=True):
    """The flow ``s -> tau^-1 g(t_offset + s tau)`` on ``s in s_range``.

    With ``gauge`` set, radial states are also pulled back by the constant
    dilation that puts the conformal factor at the origin to zero at
    ``s = s_range[0]``. This is a fixed diffeomorphism, so heat kernels and
    all invariants are unchanged; it only keeps consecutive blow-downs on
    comparable coordinate scales.
    """
    if not tau > 0:
        raise InvalidStateError("tau must be positive")
    s_lo, s_hi = map(float, s_range)
    t_lo, t_hi = t_offset + s_lo * tau, t_offset + s_hi * tau
    if not (s_lo < s_hi and trace.covers(t_lo) and trace.covers(t_hi)):
        raise TraceWindowError(
            f"rescaled window [{t_lo:.6g}, {t_hi:.6g}] outside trace [{trace.t_start:.6g}, {trace.t_end:.6g}]"
        )
    fam = trace.family
    if fam is not None and hasattr(fam, "rescaled"):
        new = fam.rescaled(tau, t_offset)
        phi0 = _anchor_phi(new(s_lo)) if gauge else None
        if phi0 is not None:
            new = fam.rescaled(tau, t_offset, math.exp(-phi0))
        n = max(11, int(np.sum((trace.times >= t_lo) & (trace.times <= t_hi))))
        return new.trace(s_lo, s_hi, n, label=f"{trace.label} rescaled tau={tau:g}")
    start = trace.state_at(t_lo)
    phi0 = _anchor_phi(start) if gauge else None
    a = math.sqrt(tau) * math.exp(-phi0) if phi0 is not None else 1.0
    inner = [st for st in trace.snapshots if t_lo < st.t < t_hi]
    states = [start] + inner + [trace.state_at(t_hi)]
    snaps = [_rescale_state(st, tau, a, (st.t - t_offset) / tau) for st in states]
    return FlowTrace(snaps, trace.policy, label=f"{trace.label} rescaled tau={tau:g}")


# ------------------------------------------------------------------ kernels
@dataclass
class BlowdownKernel:
    """Conjugate kernel ``u_k = tau^{n/2} G(., s tau; x0, 6 tau)`` on the rescaled flow."""

    k: int
    tau: float
    trace: FlowTrace
    kernel: object
    s_grid: np.ndarray
    f: dict
    neg_f_max: float
    mass_error: float


def build_blowdown_kernel(trace, tau, x0, t_offset=0.0, s_range=(1.0, 4.0), width=None, k=0,
                          n_store=None, gauge=True):
    """Rescale, solve the conjugate kernel sunk at ``(x0, 6)`` and form ``f_k``."""
    s_lo, s_hi = map(float, s_range)
    rescaled = rescale_flow(trace, tau, t_offset, (s_lo, SINK), gauge)
    if width is None:
        width = 3.0 * grid_spacing(rescaled.state_at(SINK))
    n_store = n_store or int(round((s_hi - s_lo) / 0.05))
    stores = np.linspace(s_lo, s_hi, n_store + 1)
    x0 = _rescaled_point(trace, rescaled, x0, tau, t_offset)
    kern = solve_conjugate_kernel(rescaled, x0, SINK, width, t_stop=s_lo, store_times=stores)
    f = {}
    neg = -np.inf
    for s in stores:
        st = rescaled.state_at(s)
        fs = f_from_u(st, kern.u_at(s), s)
        f[float(s)] = fs
        if s <= 3.0 + 1e-12:
            neg = max(neg, float(np.max(-fs)))
    mass_err = float(np.max(np.abs(kern.mass - 1.0)))
    return BlowdownKernel(k, float(tau), rescaled, kern, stores, f, neg, mass_err)


def _rescaled_point(trace, rescaled, x0, tau, t_offset):
    """Coordinates of ``x0`` after the gauge dilation (radial anchors stay at 0)."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    a_old = trace.state_at(t_offset + tau * rescaled.t_start)
    a_new = rescaled.state_at(rescaled.t_start)
    base_old = a_old.base if isinstance(a_old, ProductState) else a_old
    base_new = a_new.base if isinstance(a_new, ProductState) else a_new
    if isinstance(base_new, TorusState):
        ratio = base_new.grid.extent[0] / base_old.grid.extent[0]
        return tuple((x0 * ratio).tolist())
    if isinstance(base_new, RadialState) and np.linalg.norm(x0) > 0:
        raise InvalidStateError("radial blow-downs are anchored at the origin")
    return tuple(x0.tolist())


@dataclass
class BlowdownSequence:
    """Per-``k`` blow-down data on a shared base trace."""

    trace: FlowTrace
    x0: tuple
    taus: np.ndarray
    t_offset: float
    kernels: list
    s_window: tuple = (1.0, 3.0)
    info: dict = field(default_factory=dict)


def default_taus(trace, count=5, t_offset=0.0):
    """``tau_k = tau_0 2^k`` with ``6 tau_max`` at the end of the trace."""
    horizon = trace.t_end - t_offset
    tau0 = horizon / (SINK * 2 ** (count - 1))
    return tau0 * 2.0 ** np.arange(count)


def build_blowdown_sequence(trace, x0, taus=None, count=5, t_offset=0.0, s_range=(1.0, 4.0), width=None,
                            gauge=True):
    taus = default_taus(trace, count, t_offset) if taus is None else np.asarray(taus, dtype=float)
    if np.any(np.diff(taus) <= 0) or np.any(taus[1:] / taus[:-1] < 2.0 - 1e-12):
        raise InvalidStateError("tau_k must grow at least geometrically with ratio 2")
    kernels = [
        build_blowdown_kernel(trace, tau, x0, t_offset, s_range, width, k, gauge=gauge)
        for k, tau in enumerate(taus)
    ]
    return BlowdownSequence(trace, tuple(np.atleast_1d(x0).tolist()), taus, float(t_offset), kernels)


# ------------------------------------------------------------------ entropy
@dataclass
class EntropySequence:
    """``W+_k(s)`` on a common ``s`` grid and its behaviour in ``k``."""

    s: np.ndarray
    W: np.ndarray
    increments: np.ndarray
    monotone: bool
    bounded: bool
    limit: np.ndarray
    trailing_increment: np.ndarray
    cauchy: bool
    tol: float
    cauchy_tol: float
    dW: list = field(default_factory=list)


def entropy_sequence(seq, s_values=None, tol=1e-3, cauchy_tol=1e-2, bound=1e3, with_derivative=False):
    """Entropies ``W+_k(s)`` with ``sigma = s`` and the Cauchy-style limit estimate."""
    if len(seq.kernels) < 3:
        raise InsufficientRangeError("an entropy sequence needs at least three blow-downs")
    lo, hi = seq.s_window
    s_values = np.linspace(lo, hi, 5) if s_values is None else np.asarray(s_values, dtype=float)
    W = np.empty((len(seq.kernels), len(s_values)))
    derivs = []
    for i, bk in enumerate(seq.kernels):
        for j, s in enumerate(s_values):
            st = bk.trace.state_at(s)
            W[i, j] = compute_Wplus(st, bk.kernel.u_at(s), s)
        if with_derivative:
            times = bk.s_grid[(bk.s_grid >= lo - 1e-12) & (bk.s_grid <= hi + 1e-12)]
            derivs.append(Wplus_derivative_series(bk.trace, bk.kernel, 0.0, times))
    inc = np.diff(W, axis=0)
    return EntropySequence(
        s_values,
        W,
        inc,
        bool(np.all(inc >= -tol)),
        bool(np.all(np.abs(W) <= bound)),
        W[-1].copy(),
        np.abs(inc[-1]),
        bool(np.all(np.abs(inc[-1]) <= cauchy_tol)),
        tol,
        cauchy_tol,
        derivs,
    )


# ------------------------------------------------------------ soliton limit
@dataclass
class SolitonLimitReport:
    """Defect decay, profile convergence and non-flatness of a blow-down.

    Profile convergence compares circumference radius against geodesic
    distance from the anchor, a stand-in for pointed Cheeger-Gromov
    convergence on rotationally symmetric metrics.
    """

    s: float
    D_kernel: np.ndarray
    D_potential: np.ndarray | None
    profile_dist: np.ndarray
    sup_rm: np.ndarray
    non_flat: bool
    flags: list
    profile_note: str = "normalized-profile L-infinity distance (Cheeger-Gromov proxy)"
    rows: list = field(default_factory=list)

    def to_dict(self):
        def clean(a):
            return None if a is None else [float(v) if np.isfinite(v) else str(v) for v in np.atleast_1d(a)]

        return {
            "s": self.s,
            "D_kernel": clean(self.D_kernel),
            "D_potential": clean(self.D_potential),
            "profile_dist": clean(self.profile_dist),
            "sup_rm": clean(self.sup_rm),
            "non_flat": self.non_flat,
            "flags": list(self.flags),
            "profile_note": self.profile_note,
        }


def _profile(st, d):
    """Circumference radius as a function of distance from the anchor."""
    base = st.base if isinstance(st, ProductState) else st
    if isinstance(base, HomothetyState):
        rc = math.sqrt(base.c)
        return rc * sn(base.K0, d / rc)
    if isinstance(base, RadialState):
        D = base.radial_distance()
        return CubicSpline(D, base.circumference_radius())(d)
    return None


def _profile_extent(st, s):
    """Compare on the parabolic ball ``d <= 4 sqrt(s)`` cut to the trusted range."""
    base = st.base if isinstance(st, ProductState) else st
    window = 4.0 * math.sqrt(s)
    if isinstance(base, HomothetyState):
        return min(window, 0.5 * math.sqrt(base.c) * base.grid.extent[0]) if base.mesh is not None else window
    D = base.radial_distance()
    return min(window, 0.5 * float(CubicSpline(base.r, D)(base.trust_radius)))


def _torus_profile_dist(a, b):
    if a.grid.resolution != b.grid.resolution:
        return math.nan
    pa = a.phi - a.phi[0, 0]
    pb = b.phi - b.phi[0, 0]
    return float(np.max(np.abs(pa - pb)))


def soliton_limit_report(seq, s=2.0, flat_tol=1e-8):
    """Defect integrals, inter-``k`` profile distances and flags at ``s``."""
    states = [bk.trace.state_at(s) for bk in seq.kernels]
    D_kernel, D_pot = [], []
    has_pot = all(bk.trace.potential is not None for bk in seq.kernels)
    for bk, st in zip(seq.kernels, states):
        u = bk.kernel.u_at(s)
        _, integral = soliton_defect(st, f_from_u(st, u, s), s, u)
        D_kernel.append(2 * s * integral)
        if has_pot:
            f_pot, _ = bk.trace.potential(s)
            tensor, _ = soliton_defect(st, f_pot, s, u)
            D_pot.append(2 * s * st.integrate(tensor.norm_sq() * u))
    base = states[0].base if isinstance(states[0], ProductState) else states[0]
    dists = []
    if isinstance(base, TorusState):
        for a, b in zip(states[:-1], states[1:]):
            ba = a.base if isinstance(a, ProductState) else a
            bb = b.base if isinstance(b, ProductState) else b
            dists.append(_torus_profile_dist(ba, bb))
    else:
        reach = min(_profile_extent(st, s) for st in states)
        d = np.linspace(0.0, reach, 201)
        prof = [_profile(st, d) for st in states]
        dists = [float(np.max(np.abs(p - q))) / reach for p, q in zip(prof[:-1], prof[1:])]
    sup_rm = np.array([st.curvature().sup_rm for st in states])
    flags = []
    t_lo = seq.t_offset + seq.taus[0]
    if min(m["min_R"] for m in seq.trace.monitor if m["t"] >= t_lo - 1e-12) < -1e-8 * max(
        1e-300, max(m["sup_rm"] for m in seq.trace.monitor)
    ):
        flags.append("R<0 detected")
    fit = fit_type3_constant(seq.trace)
    if not fit.feasible:
        flags.append("type III bound infeasible")
    non_flat = bool(np.min(sup_rm) > flat_tol)
    if not non_flat:
        flags.append("limit is flat: the non-flat hypothesis is unmet")
    if isinstance(base, TorusState):
        nc = monitor_noncollapse(seq.kernels[-1].trace, [(np.zeros(2), 1.0, s)])
        if any("collapse" in fl for fl in nc.flags) or not nc.samples:
            flags.append("collapse at blow-down scales (kappa monitor fails)")
    rows = []
    for i, bk in enumerate(seq.kernels):
        rows.append({
            "k": i,
            "s": s,
            "D_kernel": D_kernel[i],
            "D_potential": D_pot[i] if has_pot else None,
            "profile_dist": dists[i - 1] if i > 0 else 0.0,
            "sup_rm": float(sup_rm[i]),
        })
    return SolitonLimitReport(float(s), np.array(D_kernel), np.array(D_pot) if has_pot else None,
                              np.array(dists), sup_rm, non_flat, flags, rows=rows)
