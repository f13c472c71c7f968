"""Ricci flow integration, flow traces and structural monitors.

Conformal backends evolve ``d phi/dt = e^{-2 phi} Delta_0 phi`` (which is
``dg/dt = -R g = -2 Ric`` in two dimensions) with classical RK4 in a fixed
conformal gauge. Homotheties advance ``c(t) = c0 - 2 K0 (n-1) t`` exactly.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import _kernels
from .errors import InvalidStateError, SingularTimeError, StabilityError, TraceWindowError
from .geometry import HomothetyState, ProductState, RadialState, TorusState
from .geometry.distance import ball_volume, distance_field, geodesic_distance
from .report import BoundReport

_TIME_EPS = 1e-12


@dataclass(frozen=True)
class StepPolicy:
    """Time-step control for :func:`run_flow`.

    ``save_every`` defaults to a tenth of the horizon. A step is retried at
    half size whenever sup|Rm| exceeds ``curvature_ceiling`` or changes by
    more than ``max_rel_change`` relative to the previous step.
    """

    cfl: float = 0.25
    dt_max: float | None = None
    save_every: float | None = None
    curvature_ceiling: float = 1e6
    max_rel_change: float = 0.25
    max_halvings: int = 20
    trust_factor: float = 6.0

    def as_dict(self):
        return dict(self.__dict__)


def stability_bound(state, cfl=0.25):
    """Largest explicit step ``cfl * h^2 * min e^{2 phi}`` (or its radial analogue)."""
    if isinstance(state, ProductState):
        return stability_bound(state.base, cfl)
    if isinstance(state, HomothetyState):
        return np.inf
    if isinstance(state, TorusState):
        return cfl * state.h**2 * float(state.conformal.min())
    return 4.0 * cfl * state.positivity_dt()


def _ricci_rhs(state):
    if isinstance(state, TorusState):
        inv_h2 = 1.0 / state.h**2
        return lambda phi: _kernels.ricci_rhs_torus(np.ascontiguousarray(phi), inv_h2)
    mesh = state.mesh
    return lambda phi: np.exp(-2.0 * phi) * mesh.laplacian(phi, "extrapolate")


def step_ricci(state, dt, cfl=0.25, ceiling=None):
    """Advance ``state`` by one Ricci-flow step of size ``dt``."""
    if not (np.isfinite(dt) and dt > 0):
        raise StabilityError(f"time step must be positive, got {dt}")
    if isinstance(state, ProductState):
        return ProductState(step_ricci(state.base, dt, cfl, ceiling), state.m, state.flat_extent)
    if isinstance(state, HomothetyState):
        c = state.c - 2.0 * state.K0 * (state.dim - 1) * dt
        if c <= 0 or (ceiling is not None and abs(state.K0) / c > ceiling):
            raise SingularTimeError(
                f"scale factor collapses at t={state.t + state.c / (2 * state.K0 * (state.dim - 1)):.6g}", state.t
            )
        return state.replace(c=c, t=state.t + dt)
    bound = stability_bound(state, cfl)
    if dt > bound * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.3e} exceeds the explicit stability bound {bound:.3e}")
    rhs = _ricci_rhs(state)
    phi = np.asarray(state.phi)
    k1 = rhs(phi)
    k2 = rhs(phi + 0.5 * dt * k1)
    k3 = rhs(phi + 0.5 * dt * k2)
    k4 = rhs(phi + dt * k3)
    new = phi + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(new)):
        raise SingularTimeError("conformal factor became non-finite", state.t)
    out = state.replace(phi=new, t=state.t + dt)
    if ceiling is not None and out.curvature().sup_rm > ceiling:
        raise SingularTimeError(f"sup|Rm| exceeded {ceiling:g}", state.t)
    return out


def _trust_radius(state, elapsed, factor):
    if not isinstance(state, RadialState):
        return None
    D = state.radial_distance()
    reach = D[-1] - factor * np.sqrt(max(elapsed, 0.0))
    if reach <= 0:
        return 0.0
    return float(CubicSpline(D, state.r)(reach))


def _monitor(state):
    rep = state.curvature()
    rec = {
        "t": state.t,
        "sup_rm": rep.sup_rm,
        "min_R": float(np.min(rep.R)),
        "max_R": float(np.max(rep.R)),
    }
    if isinstance(state, TorusState):
        rec["volume"] = state.total_volume()
        rec["integral_R"] = state.integrate(rep.R)
    if isinstance(state, RadialState):
        rec["trust_radius"] = state.trust_radius
    return rec


class FlowTrace:
    """Time-ordered metric snapshots with interpolated access.

    Between snapshots ``phi`` (or ``log c``) is interpolated linearly. A
    trace may instead wrap an exact ``family(t)``; snapshots then only mark
    the sampled times and ``state_at`` evaluates the family directly.
    ``potential(t)``, when present, returns the soliton potential ``f`` and
    the ``sigma`` it solves with.
    """

    def __init__(self, snapshots, policy=None, monitor=None, family=None, potential=None, label=""):
        snapshots = list(snapshots)
        if not snapshots:
            raise InvalidStateError("a trace needs at least one snapshot")
        times = np.array([s.t for s in snapshots], dtype=float)
        if np.any(np.diff(times) <= 0):
            raise InvalidStateError("snapshot times must be strictly increasing")
        self.snapshots = tuple(snapshots)
        self.times = times
        self.times.flags.writeable = False
        self.policy = policy
        self.monitor = list(monitor) if monitor is not None else [_monitor(s) for s in snapshots]
        self.family = family
        self.potential = potential
        self.label = label

    def __len__(self):
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)

    def __getitem__(self, i):
        return self.snapshots[i]

    @property
    def t_start(self):
        return float(self.times[0])

    @property
    def t_end(self):
        return float(self.times[-1])

    @property
    def dim(self):
        return self.snapshots[0].dim

    def covers(self, t):
        span = max(1.0, abs(self.t_end))
        return self.t_start - _TIME_EPS * span <= t <= self.t_end + _TIME_EPS * span

    def state_at(self, t):
        if not self.covers(t):
            raise TraceWindowError(f"t={t} outside trace window [{self.t_start}, {self.t_end}]")
        t = float(np.clip(t, self.t_start, self.t_end))
        if self.family is not None:
            return self.family(t)
        i = bisect_right(self.times, t) - 1
        if i >= len(self.times) - 1:
            return self.snapshots[-1]
        a, b = self.snapshots[i], self.snapshots[i + 1]
        if t == a.t:
            return a
        w = (t - a.t) / (b.t - a.t)
        return _blend(a, b, w, t)

    def appended(self, state):
        snaps = list(self.snapshots) + [state]
        return FlowTrace(snaps, self.policy, self.monitor + [_monitor(state)], self.family, self.potential, self.label)

    def sup_rm_series(self):
        return np.array([m["sup_rm"] for m in self.monitor])


def _blend(a, b, w, t):
    if isinstance(a, ProductState):
        return ProductState(_blend(a.base, b.base, w, t), a.m, a.flat_extent)
    if isinstance(a, HomothetyState):
        return a.replace(c=float(np.exp((1 - w) * np.log(a.c) + w * np.log(b.c))), t=t)
    phi = (1 - w) * np.asarray(a.phi) + w * np.asarray(b.phi)
    if isinstance(a, RadialState):
        return a.replace(phi=phi, t=t, trust_radius=min(a.trust_radius, b.trust_radius))
    return a.replace(phi=phi, t=t)


def run_flow(state0, horizon, policy=None):
    """Integrate the Ricci flow from ``state0`` over ``[t0, t0 + horizon]``."""
    policy = policy or StepPolicy()
    if not (np.isfinite(horizon) and horizon > 0):
        raise InvalidStateError("horizon must be positive")
    t0 = state0.t
    every = policy.save_every or horizon / 10.0
    n_saves = max(1, int(np.ceil(horizon / every - 1e-9)))
    targets = [t0 + min(horizon, (k + 1) * every) for k in range(n_saves)]
    state = state0
    snaps = [state0]
    k_old = state0.curvature().sup_rm
    for target in targets:
        while state.t < target - _TIME_EPS * max(1.0, target):
            cap = min(stability_bound(state, policy.cfl), policy.dt_max or np.inf, target - state.t)
            dt = cap
            for _ in range(policy.max_halvings + 1):
                try:
                    new = step_ricci(state, dt, policy.cfl)
                    k_new = new.curvature().sup_rm
                    ok = np.isfinite(k_new) and k_new <= policy.curvature_ceiling
                    ok = ok and abs(k_new - k_old) <= policy.max_rel_change * max(k_old, 1e-300)
                    ok = ok or (k_old == 0.0 and k_new == 0.0)
                except SingularTimeError:
                    ok = False
                if ok:
                    break
                dt *= 0.5
            else:
                raise SingularTimeError(
                    f"curvature blow-up: step control exhausted near t={state.t:.6g} (sup|Rm|={k_old:.3g})", state.t
                )
            state, k_old = new, k_new
        state = _retime(state, target)
        if isinstance(state, RadialState):
            trust = _trust_radius(state, target - t0, policy.trust_factor)
            state = state.replace(trust_radius=min(trust, state0.trust_radius))
        snaps.append(state)
    return FlowTrace(snaps, policy)


def _retime(state, t):
    if isinstance(state, ProductState):
        return ProductState(_retime(state.base, t), state.m, state.flat_extent)
    return state if state.t == t else state.replace(t=t)


# ----------------------------------------------------------------- type III
@dataclass
class TypeIIIReport:
    """Smallest ``A`` with ``sup|Rm|(t) <= A/(A+t)`` over the trace."""

    A_star: float
    feasible: bool
    times: np.ndarray
    sup_rm: np.ndarray
    A_t: np.ndarray
    margin: np.ndarray
    reason: str = ""


def _minimal_A(k, t, cap):
    if k <= 0:
        return 0.0
    if t <= 0:
        return 0.0 if k <= 1.0 else np.inf
    if k >= 1.0:
        return np.inf
    A = k * t / (1.0 - k)
    return A if A <= cap else np.inf


def fit_type3_constant(trace, series=None, cap=1e6):
    """Fit the type III constant; ``series`` overrides sup|Rm| (e.g. sup R)."""
    times = np.asarray(trace.times, dtype=float)
    k = np.asarray(trace.sup_rm_series() if series is None else series, dtype=float)
    A_t = np.array([_minimal_A(ki, ti, cap) for ki, ti in zip(k, times)])
    feasible = bool(np.all(np.isfinite(A_t)))
    A_star = float(A_t.max()) if feasible else np.inf
    if feasible:
        margin = A_star / (A_star + times) - k if A_star > 0 else -k
    else:
        margin = np.full_like(times, -np.inf)
    reason = ""
    if not feasible:
        bad = int(np.argmax(~np.isfinite(A_t)))
        reason = f"sup|Rm|={k[bad]:.4g} at t={times[bad]:.4g} admits no A <= {cap:g}"
    return TypeIIIReport(A_star, feasible, times, k, A_t, margin, reason)


# --------------------------------------------------------------- hypotheses
def _min_R(trace, s, t):
    vals = [m["min_R"] for m in trace.monitor if s - 1e-12 <= m["t"] <= t + 1e-12]
    vals.append(float(np.min(trace.state_at(s).curvature().R)))
    vals.append(float(np.min(trace.state_at(t).curvature().R)))
    return min(vals)


def _ricci_sign_flags(trace, s, t, tol=1e-8):
    scale = max(1e-300, max(m["sup_rm"] for m in trace.monitor))
    if _min_R(trace, s, t) < -tol * scale:
        return ["Ric<0 detected"]
    return []


# ----------------------------------------------------------- non-collapse
@dataclass
class NonCollapseReport:
    kappa_hat: float
    samples: list
    worst: dict | None
    flags: list = field(default_factory=list)


def _random_plan(trace, plan):
    rng = np.random.default_rng(plan.get("seed", 0))
    budget = int(plan.get("budget", 16))
    lo, hi = plan.get("r_range", (0.05, 0.5))
    out = []
    for _ in range(budget):
        t = float(rng.choice(trace.times))
        st = trace.state_at(t)
        base = st.base if isinstance(st, ProductState) else st
        if isinstance(base, TorusState):
            x = rng.uniform(0, 1, 2) * np.array(base.grid.extent)
        elif isinstance(base, RadialState):
            rad = 0.5 * base.trust_radius * np.sqrt(rng.uniform())
            ang = rng.uniform(0, 2 * np.pi)
            x = np.array([rad * np.cos(ang), rad * np.sin(ang)])
        else:
            x = np.zeros(base.dim)
        if isinstance(st, ProductState):
            x = np.concatenate((x, np.zeros(st.m)))
        r = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        out.append((x, r, t))
    return out


def _ball_sup_rm(state, x, r):
    base = state.base if isinstance(state, ProductState) else state
    rm = base.curvature().rm_norm
    if isinstance(base, HomothetyState):
        return float(np.max(rm))
    x = np.asarray(x, dtype=float)[:2]
    if isinstance(base, RadialState):
        # the ball lies in the annulus |D - D(x)| <= r
        D = base.radial_distance()
        d_x = float(CubicSpline(base.r, D)(base.radius_of(x)))
        return float(np.max(rm[np.abs(D - d_x) <= r + np.gradient(D)]))
    dist, _, _ = distance_field(base, x)
    inside = dist < r
    return float(np.max(rm[inside])) if np.any(inside) else float(np.max(rm))


def monitor_noncollapse(trace, plan):
    """Infimum of ``|B(x,r;t)|/r^n`` over admissible samples.

    ``plan`` is a list of ``(x, r, t)`` triples or a dict with ``budget``,
    ``seed`` and ``r_range`` for random sampling. A sample is admissible when
    ``r^2 sup_B |Rm| <= 1``.
    """
    triples = _random_plan(trace, plan) if isinstance(plan, dict) else list(plan)
    samples, flags = [], set()
    for x, r, t in triples:
        st = trace.state_at(t)
        base = st.base if isinstance(st, ProductState) else st
        if isinstance(base, RadialState):
            reach = base.radius_of(np.asarray(x, dtype=float)[:2])
            D = base.radial_distance()
            if float(CubicSpline(base.r, D)(reach)) + r > float(CubicSpline(base.r, D)(base.trust_radius)):
                flags.add("ball exceeds trusted domain (skipped)")
                continue
        k_ball = _ball_sup_rm(st, x, r)
        if r * r * k_ball > 1.0:
            continue
        vol = ball_volume(st, x, r)
        rec = {"x": [float(v) for v in np.atleast_1d(x)], "r": float(r), "t": float(t), "volume": vol,
               "ratio": vol / r**st.dim, "sup_rm_ball": k_ball}
        if isinstance(base, TorusState) and vol >= 0.95 * base.total_volume() * (
            st.flat_volume if isinstance(st, ProductState) else 1.0
        ):
            rec["compact_collapse"] = True
            flags.add("compact collapse: ball saturates total volume")
        samples.append(rec)
    if not samples:
        return NonCollapseReport(float("nan"), [], None, sorted(flags | {"no admissible samples"}))
    worst = min(samples, key=lambda s: s["ratio"])
    return NonCollapseReport(worst["ratio"], samples, worst, sorted(flags))


# ------------------------------------------------------ doubling / volume
def check_distance_doubling(trace, x, y, s, t, A=None, tol=0.05):
    """Check ``1 <= d(x,y;s)/d(x,y;t) <= ((A+t)/(A+s))^A``."""
    if not s < t:
        raise TraceWindowError("need s < t")
    for tt in (s, t):
        if not trace.covers(tt):
            raise TraceWindowError(f"t={tt} outside trace window")
    d_s = geodesic_distance(trace.state_at(s), x, y)
    d_t = geodesic_distance(trace.state_at(t), x, y)
    if d_s == 0 or d_t == 0:
        raise InvalidStateError("distance doubling needs x != y")
    flags = _ricci_sign_flags(trace, s, t)
    if A is None:
        fit = fit_type3_constant(trace)
        A = fit.A_star
        if not fit.feasible:
            flags.append("type III bound infeasible")
    upper = ((A + t) / (A + s)) ** A if np.isfinite(A) and A > 0 else (1.0 if A == 0 else np.inf)
    ratio = d_s / d_t
    margin = min(ratio - 1.0, upper - ratio)
    slack = tol * max(1.0, upper if np.isfinite(upper) else 1.0)
    return BoundReport(
        name="distance_doubling",
        target="1 <= d(x,y;s)/d(x,y;t) <= ((A+t)/(A+s))^A under Ric >= 0 and |Rm| <= A/(A+t)",
        passed=bool(margin >= -slack),
        worst_margin=float(margin),
        slack=float(slack),
        fitted_constants={"A": float(A), "ratio": float(ratio), "upper": float(upper)},
        hypothesis_flags=flags,
        details={"d_s": d_s, "d_t": d_t, "s": s, "t": t},
    )


def _region_volumes(trace, x, r, t_ref, times):
    ref = trace.state_at(t_ref)
    if isinstance(ref, HomothetyState):
        rho = r / np.sqrt(ref.c)
        return [ball_volume(st, x, rho * np.sqrt(st.c)) for st in map(trace.state_at, times)]
    dist, _, scale = distance_field(ref, x)
    base = ref.base if isinstance(ref, ProductState) else ref
    if isinstance(base, RadialState) and dist.shape != base.shape:
        raise InvalidStateError("volume comparability on radial states needs balls centred at the origin")
    frac = np.clip((r - dist) / scale + 0.5, 0.0, 1.0)
    if not np.any(frac > 0):
        raise InvalidStateError("empty ball")
    return [float(np.sum(frac * trace.state_at(tau).mass_weights())) for tau in times]


def check_volume_comparability(trace, x, r, s, t, t_ref=None, samples=5, A=None, tol=0.05):
    """Volumes of the fixed set ``B(x, r; t_ref)`` measured at times in ``[s, t]``.

    Each pair ``s' <= t'`` must satisfy
    ``((A+s')/(A+t'))^A <= vol_{t'}/vol_{s'} <= 1`` with ``A`` fitted on sup R.
    """
    if not s < t:
        raise TraceWindowError("need s < t")
    t_ref = 0.5 * (s + t) if t_ref is None else t_ref
    times = np.linspace(s, t, samples)
    vols = _region_volumes(trace, x, r, t_ref, times)
    flags = _ricci_sign_flags(trace, s, t)
    if A is None:
        sup_R = np.array([max(m["max_R"], 0.0) for m in trace.monitor])
        fit = fit_type3_constant(trace, series=sup_R)
        A = fit.A_star
        if not fit.feasible:
            flags.append("R <= A/(A+t) infeasible")
    worst, ratios = np.inf, []
    for i in range(len(times)):
        for j in range(i + 1, len(times)):
            ratio = vols[j] / vols[i]
            lower = ((A + times[i]) / (A + times[j])) ** A if np.isfinite(A) and A > 0 else (1.0 if A == 0 else 0.0)
            worst = min(worst, ratio - lower, 1.0 - ratio)
            ratios.append((float(times[i]), float(times[j]), float(ratio), float(lower)))
    return BoundReport(
        name="volume_comparability",
        target="((A+s)/(A+t))^A <= vol_t(B)/vol_s(B) <= 1 under 0 <= R <= A/(A+t)",
        passed=bool(worst >= -tol),
        worst_margin=float(worst),
        slack=float(tol),
        fitted_constants={"A_R": float(A)},
        hypothesis_flags=flags,
        details={"pairs": ratios, "t_ref": float(t_ref), "volumes": vols},
    )


__all__ = [
    "StepPolicy",
    "FlowTrace",
    "TypeIIIReport",
    "NonCollapseReport",
    "stability_bound",
    "step_ricci",
    "run_flow",
    "fit_type3_constant",
    "monitor_noncollapse",
    "check_distance_doubling",
    "check_volume_comparability",
]
