"""Geodesic distances and ball volumes.

Periodic states use Dijkstra on a 32-neighbour grid graph whose edge
lengths are ``e^{(phi_i + phi_j)/2} h |offset|``; point-to-point values are
then refined by shortening the graph path as a polyline. Radial states
integrate ``e^{phi}`` along rays and fall back to a geodesic-polar graph for
balls away from the origin. Homotheties and products use closed forms.
"""
from __future__ import annotations

from math import gamma, gcd, pi

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline
from scipy.optimize import minimize
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from ..errors import DomainError
from .grid import GridSpec
from .states import HomothetyState, ProductState, RadialState, TorusState, sn, sphere_area

# primitive offsets of length <= sqrt(37), one per +/- pair: 80 directions,
# so graph distances overshoot the metric by ~0.1%
_HALF_STENCIL = [
    (a, b)
    for a in range(7)
    for b in range(-6, 7)
    if (a > 0 or b > 0) and 0 < a * a + b * b <= 37 and gcd(a, abs(b)) == 1
]
_PATH_POINTS = 97
_PATCH_NODES = 192


def _ball_fraction(r, d, scale):
    return np.clip((r - d) / scale + 0.5, 0.0, 1.0)


def euclidean_ball(m, rho):
    return pi ** (m / 2.0) / gamma(m / 2.0 + 1.0) * np.asarray(rho, dtype=float) ** m


# ---------------------------------------------------------------- torus
def _torus_graph(state):
    cached = state.__dict__.get("_graph")
    if cached is not None:
        return cached
    ny, nx = state.shape
    idx = np.arange(ny * nx).reshape(ny, nx)
    ephi = np.exp(state.phi)
    rows, cols, w = [], [], []
    for dx, dy in _HALF_STENCIL:
        nb = np.roll(np.roll(idx, -dy, axis=0), -dx, axis=1)
        e_nb = np.roll(np.roll(ephi, -dy, axis=0), -dx, axis=1)
        rows.append(idx.ravel())
        cols.append(nb.ravel())
        w.append((np.sqrt(ephi * e_nb) * state.h * np.hypot(dx, dy)).ravel())
    rows, cols, w = map(np.concatenate, (rows, cols, w))
    state.__dict__["_graph"] = (rows, cols, w)
    return state.__dict__["_graph"]


def _torus_anchor_edges(state, x, node):
    """Edges from a virtual node at ``x`` to the four surrounding grid nodes."""
    x = state.wrap(x)
    h = state.h
    ny, nx = state.shape
    i0 = int(np.floor(x[0] / h))
    j0 = int(np.floor(x[1] / h))
    phi_x = state.sample(state.phi, x)
    rows, cols, w = [], [], []
    for di in (0, 1):
        for dj in (0, 1):
            ix, iy = i0 + di, j0 + dj
            off = np.array([ix * h, iy * h]) - x
            phi_n = state.phi[iy % ny, ix % nx]
            rows.append(node)
            cols.append((iy % ny) * nx + ix % nx)
            w.append(max(np.exp(0.5 * (phi_x + phi_n)) * np.hypot(*off), 1e-300))
    return rows, cols, w


def _torus_solve(state, x, y=None):
    rows, cols, w = _torus_graph(state)
    n = state.shape[0] * state.shape[1]
    src = n
    er, ec, ew = _torus_anchor_edges(state, x, src)
    extra = [(er, ec, ew)]
    if y is not None:
        extra.append(_torus_anchor_edges(state, y, n + 1))
    total = n + len(extra)
    R = np.concatenate([rows] + [np.asarray(e[0]) for e in extra])
    C = np.concatenate([cols] + [np.asarray(e[1]) for e in extra])
    W = np.concatenate([w] + [np.asarray(e[2]) for e in extra])
    graph = coo_matrix((W, (R, C)), shape=(total, total)).tocsr()
    dist, pred = dijkstra(graph, directed=False, indices=src, return_predecessors=True)
    return dist, pred


class _TorusPhi:
    """Periodic bicubic interpolant of ``phi`` with exact derivatives."""

    def __init__(self, state, pad=4):
        h = state.h
        ny, nx = state.shape
        padded = np.pad(state.phi, pad, mode="wrap")
        xs = (np.arange(nx + 2 * pad) - pad) * h
        ys = (np.arange(ny + 2 * pad) - pad) * h
        self.spl = RectBivariateSpline(ys, xs, padded, kx=3, ky=3, s=0)
        self.L = np.array(state.grid.extent)

    def __call__(self, p):
        q = np.mod(p, self.L)
        val = self.spl.ev(q[:, 1], q[:, 0])
        gx = self.spl.ev(q[:, 1], q[:, 0], dy=1)
        gy = self.spl.ev(q[:, 1], q[:, 0], dx=1)
        return val, np.stack([gx, gy], axis=1)


def _resample(poly, k):
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    s = np.concatenate(([0.0], np.cumsum(seg)))
    if s[-1] == 0:
        return np.repeat(poly[:1], k, axis=0)
    t = np.linspace(0.0, s[-1], k)
    return np.stack([np.interp(t, s, poly[:, 0]), np.interp(t, s, poly[:, 1])], axis=1)


def shorten_path(field, poly, k=_PATH_POINTS):
    """Length of the locally shortest polyline near ``poly`` in the metric ``e^{2 phi}|dx|^2``.

    ``field(p)`` returns ``phi`` and its gradient at an ``(m, 2)`` array of points.
    """
    path = _resample(np.asarray(poly, dtype=float), k)
    a, b = path[0], path[-1]

    def length(flat):
        P = np.vstack([a, flat.reshape(-1, 2), b])
        d = np.diff(P, axis=0)
        seg = np.maximum(np.linalg.norm(d, axis=1), 1e-300)
        phi, gphi = field(0.5 * (P[1:] + P[:-1]))
        e = np.exp(phi)
        L = np.sum(e * seg)
        unit = d / seg[:, None]
        dseg = e[:, None] * unit
        dmid = 0.5 * (e * seg)[:, None] * gphi
        g = np.zeros_like(P)
        g[:-1] += -dseg + dmid
        g[1:] += dseg + dmid
        return L, g[1:-1].ravel()

    L0, _ = length(path[1:-1].ravel())
    if L0 == 0:
        return 0.0

    def scaled(flat):
        L, g = length(flat)
        return L / L0, g / L0

    res = minimize(scaled, path[1:-1].ravel(), jac=True, method="L-BFGS-B", options={"gtol": 1e-12, "ftol": 1e-15, "maxiter": 3000})
    return float(min(res.fun, 1.0) * L0)


def _torus_distance(state, x, y):
    x = state.wrap(x)
    y = state.wrap(y)
    L = np.array(state.grid.extent)
    n = state.shape[0] * state.shape[1]
    dist, pred = _torus_solve(state, x, y)
    d_graph = float(dist[n + 1])
    if d_graph == 0.0:
        return 0.0
    nx = state.shape[1]
    chain = []
    node = pred[n + 1]
    while node != n and node >= 0:
        chain.append(node)
        node = pred[node]
    chain = chain[::-1]
    pts = [x]
    for nd in chain:
        q = np.array([(nd % nx) * state.h, (nd // nx) * state.h])
        pts.append(pts[-1] + (q - pts[-1] - L * np.rint((q - pts[-1]) / L)))
    pts.append(pts[-1] + (y - pts[-1] - L * np.rint((y - pts[-1]) / L)))
    field = state.__dict__.get("_phi_interp")
    if field is None:
        field = state.__dict__["_phi_interp"] = _TorusPhi(state)
    return min(d_graph, shorten_path(field, np.array(pts)))


# ---------------------------------------------------------------- radial
class _RadialPhi:
    def __init__(self, state):
        r = state.r
        self.spl = CubicSpline(np.concatenate((-r[:0:-1], r)), np.concatenate((state.phi[:0:-1], state.phi)))
        self.dspl = self.spl.derivative()

    def __call__(self, p):
        rho = np.hypot(p[:, 0], p[:, 1])
        d = self.dspl(rho)
        safe = np.where(rho > 0, rho, 1.0)
        g = np.where(rho[:, None] > 0, p * (d / safe)[:, None], 0.0)
        return self.spl(rho), g


def _radial_profile(state):
    cached = state.__dict__.get("_profile")
    if cached is None:
        D = state.radial_distance()
        cached = state.__dict__["_profile"] = (D, CubicSpline(D, state.r))
    return cached


def _polar_graph(state):
    cached = state.__dict__.get("_polar")
    if cached is not None:
        return cached
    D, _ = _radial_profile(state)
    w_of_s = CubicSpline(D, state.circumference_radius())
    ns = state.grid.resolution[0]
    ds = D[-1] / ns
    s = (np.arange(ns) + 0.5) * ds
    nt = int(np.clip(np.ceil(2 * pi * w_of_s(s).max() / ds), 32, 1024))
    dth = 2 * pi / nt
    idx = np.arange(ns * nt).reshape(ns, nt)
    rows, cols, w = [], [], []
    for dk, dj in _HALF_STENCIL:
        if dj < 0:
            dj, dk = -dj, -dk
        a = idx[: ns - dj]
        b = np.roll(idx, -dk, axis=1)[dj:]
        wm = w_of_s(s[: ns - dj] + 0.5 * dj * ds)
        length = np.sqrt((dj * ds) ** 2 + (wm * dk * dth) ** 2)
        rows.append(a.ravel())
        cols.append(b.ravel())
        w.append(np.repeat(length, nt))
    center = ns * nt
    rows.append(np.full(nt, center))
    cols.append(idx[0])
    w.append(np.full(nt, 0.5 * ds))
    anti = w_of_s.antiderivative()
    faces = np.arange(ns + 1) * ds
    vol = np.repeat(np.diff(anti(faces)) * dth, nt)
    vol = np.concatenate((vol, [0.0]))
    cached = state.__dict__["_polar"] = (
        np.concatenate(rows), np.concatenate(cols), np.concatenate(w), vol, ds, dth, ns, nt, w_of_s
    )
    return cached


def _polar_field(state, x):
    rows, cols, w, vol, ds, dth, ns, nt, w_of_s = _polar_graph(state)
    D, _ = _radial_profile(state)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    r_x = state.radius_of(x)
    theta = float(np.arctan2(x[1], x[0])) if x.size == 2 else 0.0
    s_x = float(CubicSpline(state.r, D)(r_x))
    src = ns * nt + 1
    j = s_x / ds - 0.5
    k = (theta % (2 * pi)) / dth
    er, ec, ew = [], [], []
    for jj in (int(np.floor(j)), int(np.floor(j)) + 1):
        for kk in (int(np.floor(k)), int(np.floor(k)) + 1):
            if 0 <= jj < ns:
                er.append(src)
                ec.append(jj * nt + kk % nt)
                dsv = (jj + 0.5) * ds - s_x
                ew.append(max(np.hypot(dsv, w_of_s(s_x + 0.5 * dsv) * (kk - k) * dth), 1e-300))
    er.append(src)
    ec.append(ns * nt)
    ew.append(max(s_x, 1e-300))
    total = ns * nt + 2
    graph = coo_matrix(
        (np.concatenate((w, ew)), (np.concatenate((rows, er)), np.concatenate((cols, ec)))), shape=(total, total)
    ).tocsr()
    dist = dijkstra(graph, directed=False, indices=src)[: ns * nt + 1]
    return dist, vol, ds


def _radial_distance(state, x, y):
    D, _ = _radial_profile(state)
    rx, ry = state.radius_of(x), state.radius_of(y)
    spl = CubicSpline(state.r, D)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if rx == 0 or ry == 0:
        return float(abs(spl(max(rx, ry))))
    if x.size == 1 or y.size == 1:
        raise DomainError("off-origin pairs need (x, y) coordinates")
    if np.isclose(np.arctan2(x[1], x[0]), np.arctan2(y[1], y[0]), atol=1e-14):
        return float(abs(spl(ry) - spl(rx)))
    dist, _, _ = _polar_field(state, x)
    d_graph = _polar_lookup(state, dist, y)
    field = state.__dict__.get("_phi_interp")
    if field is None:
        field = state.__dict__["_phi_interp"] = _RadialPhi(state)
    return min(d_graph, shorten_path(field, np.array([x, y])))


def _polar_lookup(state, dist, y):
    rows, cols, w, vol, ds, dth, ns, nt, w_of_s = _polar_graph(state)
    D, _ = _radial_profile(state)
    s_y = float(CubicSpline(state.r, D)(state.radius_of(y)))
    j = int(np.clip(np.rint(s_y / ds - 0.5), 0, ns - 1))
    k = int(np.rint((np.arctan2(y[1], y[0]) % (2 * pi)) / dth)) % nt
    return float(dist[j * nt + k])


def _radial_ball(state, x, r):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if state.radius_of(x) == 0.0:
        D, r_of_D = _radial_profile(state)
        rho = min(r, D[-1])
        area = CubicSpline(state.r, 2 * pi * state.r * state.conformal).antiderivative()
        return float(area(r_of_D(rho)) - area(0.0))
    return _patch_ball(state, x, r)


def _patch_ball(state, x, r, n=_PATCH_NODES):
    """Off-centre ball measured on a square coordinate patch around ``x``.

    A path of length ``<= r`` from ``x`` stays in the annulus
    ``|D - D(x)| <= r``, so the patch half-width ``1.5 r e^{-min phi}`` keeps
    every such path inside it and periodic wrap-around never shortcuts.
    """
    D, r_of_D = _radial_profile(state)
    s_x = float(CubicSpline(state.r, D)(state.radius_of(x)))
    if s_x + r > D[-1]:
        raise DomainError("ball leaves the radial grid")
    lo, hi = float(r_of_D(max(s_x - r, 0.0))), float(r_of_D(s_x + r))
    field = state.__dict__.get("_phi_interp")
    if field is None:
        field = state.__dict__["_phi_interp"] = _RadialPhi(state)
    probe = np.linspace(lo, hi, 4 * state.grid.resolution[0])
    phi_min = float(field(np.stack([probe, np.zeros_like(probe)], axis=1))[0].min())
    half = 1.5 * r * np.exp(-phi_min)
    grid = GridSpec.periodic(n, 2 * half)
    X, Y = grid.xy
    pts = np.stack([X.ravel() + x[0] - half, Y.ravel() + x[1] - half], axis=1)
    rho = np.minimum(np.hypot(pts[:, 0], pts[:, 1]), state.r[-1])
    phi = field(np.stack([rho, np.zeros_like(rho)], axis=1))[0].reshape(grid.shape)
    dist, vol, scale = distance_field(TorusState(phi, grid), (half, half))
    return float(np.sum(vol * _ball_fraction(r, dist, scale)))


# ------------------------------------------------------------- homothety
def _model_distance(K, a, b):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    n = max(a.size, b.size)
    a = np.pad(a, (0, n - a.size))
    b = np.pad(b, (0, n - b.size))
    ra, rb = np.linalg.norm(a), np.linalg.norm(b)
    if K == 0 or ra == 0 or rb == 0:
        return float(np.linalg.norm(a - b)) if K == 0 else abs(ra - rb)
    cosg = np.clip(np.dot(a, b) / (ra * rb), -1.0, 1.0)
    k = np.sqrt(abs(K))
    if K > 0:
        val = np.cos(k * ra) * np.cos(k * rb) + np.sin(k * ra) * np.sin(k * rb) * cosg
        return float(np.arccos(np.clip(val, -1.0, 1.0)) / k)
    # small-angle stable form of the hyperbolic law of cosines
    val = np.cosh(k * (ra - rb)) + np.sinh(k * ra) * np.sinh(k * rb) * (1.0 - cosg)
    return float(np.arccosh(max(val, 1.0)) / k)


def model_ball_volume(n, K, rho):
    """Volume of a geodesic ball of radius ``rho`` in the unit-scale model space."""
    from scipy.integrate import quad

    if K > 0:
        rho = min(rho, pi / np.sqrt(K))
    if K == 0:
        return float(euclidean_ball(n, rho))
    val, _ = quad(lambda s: np.abs(sn(K, s)) ** (n - 1), 0.0, rho, epsabs=0, epsrel=1e-13, limit=200)
    return float(sphere_area(n - 1) * val)


# ------------------------------------------------------------- public API
def geodesic_distance(state, x, y):
    """Distance between two points at the time of ``state``."""
    if isinstance(state, TorusState):
        return _torus_distance(state, x, y)
    if isinstance(state, RadialState):
        return _radial_distance(state, x, y)
    if isinstance(state, HomothetyState):
        state.base_radius_of(x)
        state.base_radius_of(y)
        return float(np.sqrt(state.c) * _model_distance(state.K0, x, y))
    if isinstance(state, ProductState):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != (2 + state.m,) or y.shape != x.shape:
            raise DomainError(f"product points have {2 + state.m} coordinates")
        dz = y[2:] - x[2:]
        dz = dz - state.flat_extent * np.rint(dz / state.flat_extent)
        db = geodesic_distance(state.base, x[:2], y[:2])
        return float(np.hypot(db, np.linalg.norm(dz)))
    raise TypeError(f"unsupported state {type(state).__name__}")


def distance_field(state, x):
    """Distances from ``x`` to every node, with the node volumes they carry.

    Returns ``(dist, volume, spacing)`` where ``spacing`` is the local node
    spacing used to smooth ball indicators.
    """
    if isinstance(state, TorusState):
        n = state.shape[0] * state.shape[1]
        dist, _ = _torus_solve(state, x)
        return dist[:n].reshape(state.shape), state.mass_weights(), state.node_scale()
    if isinstance(state, RadialState):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if state.radius_of(x) == 0.0:
            D, _ = _radial_profile(state)
            return D, state.mass_weights(), np.gradient(D)
        dist, vol, ds = _polar_field(state, x)
        return dist, vol, ds
    if isinstance(state, ProductState):
        return distance_field(state.base, np.asarray(x, dtype=float)[:2])
    raise TypeError(f"no node distance field for {type(state).__name__}")


def ball_volume(state, x, r):
    """Volume of the geodesic ball ``B(x, r)``."""
    if not (np.isfinite(r) and r > 0):
        raise DomainError(f"ball radius must be positive, got {r}")
    if isinstance(state, TorusState):
        dist, vol, scale = distance_field(state, x)
        return float(np.sum(vol * _ball_fraction(r, dist, scale)))
    if isinstance(state, RadialState):
        return _radial_ball(state, x, r)
    if isinstance(state, HomothetyState):
        state.base_radius_of(x)
        return state.c ** (state.dim / 2.0) * model_ball_volume(state.dim, state.K0, r / np.sqrt(state.c))
    if isinstance(state, ProductState):
        if r > 0.5 * state.flat_extent:
            raise DomainError("ball radius exceeds half the flat period")
        dist, vol, _ = distance_field(state, x)
        rho = np.sqrt(np.clip(r * r - dist * dist, 0.0, None))
        return float(np.sum(vol * euclidean_ball(state.m, rho)))
    raise TypeError(f"unsupported state {type(state).__name__}")


__all__ = ["geodesic_distance", "ball_volume", "distance_field", "shorten_path", "model_ball_volume", "euclidean_ball"]
