"""Metric states for the four symmetric reductions.

Every backend exposes the same small surface: curvature, the
Laplace-Beltrami operator, gradients and Hessians of sampled functions,
integration, and a node-weight / stiffness pair ``(M, L)`` with
``Delta_g ~ M^{-1} L`` that the heat solvers time-step. ``L`` is symmetric
with zero row sums, so ``1^T L = 0`` and the density form of the conjugate
equation conserves mass exactly.
"""
from __future__ import annotations

from functools import lru_cache
from math import gamma, pi

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import map_coordinates

from .. import _kernels
from ..errors import DomainError, GridMismatchError, InvalidStateError
from .grid import GridSpec
from .radial import RadialMesh
from .tensors import CurvatureReport, SymTensorField


def sphere_area(k):
    """Area of the unit sphere S^k."""
    return 2.0 * pi ** ((k + 1) / 2.0) / gamma((k + 1) / 2.0)


def sn(K, rho):
    rho = np.asarray(rho, dtype=float)
    if K > 0:
        s = np.sqrt(K)
        return np.sin(s * rho) / s
    if K < 0:
        s = np.sqrt(-K)
        return np.sinh(s * rho) / s
    return rho.copy()


def cn(K, rho):
    rho = np.asarray(rho, dtype=float)
    if K > 0:
        return np.cos(np.sqrt(K) * rho)
    if K < 0:
        return np.cosh(np.sqrt(-K) * rho)
    return np.ones_like(rho)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def _require_finite(a, what):
    if not np.all(np.isfinite(a)):
        raise InvalidStateError(f"{what} contains non-finite samples")


@lru_cache(maxsize=32)
def _plane_mesh(grid):
    return RadialMesh(grid, lambda r: 2.0 * pi * r)


@lru_cache(maxsize=32)
def _model_mesh(grid, n, K0):
    area = sphere_area(n - 1)
    r_end = pi / np.sqrt(K0) if K0 > 0 and grid.extent[0] >= pi / np.sqrt(K0) * (1 - 1e-12) else None
    return RadialMesh(grid, lambda r: area * np.abs(sn(K0, r)) ** (n - 1), r_end=r_end)


def _even_spline(r, v):
    rr = np.concatenate((-r[:0:-1], r))
    vv = np.concatenate((v[:0:-1], v))
    return CubicSpline(rr, vv)


class MetricState:
    """Common interface; see the concrete backends."""

    backend = "abstract"
    t = 0.0

    @property
    def shape(self):
        return self.grid.shape

    def check_field(self, v, name="field"):
        v = np.asarray(v, dtype=float)
        if v.shape != self.shape:
            raise GridMismatchError(f"{name} has shape {v.shape}, grid expects {self.shape}")
        _require_finite(v, name)
        return v

    def positivity_dt(self):
        """Largest forward-Euler step keeping ``u + dt M^{-1} L u`` nonnegative."""
        M = self.mass_weights()
        return float(np.min(M / self._stiffness_diag()))

    def grad_norm_sq(self, v):
        raise NotImplementedError

    def curvature(self):
        """Curvature report, computed once per state."""
        rep = self.__dict__.get("_curv")
        if rep is None:
            rep = self.__dict__["_curv"] = self._curvature()
        return rep


class TorusState(MetricState):
    """Conformal metric ``e^{2 phi}(dx^2 + dy^2)`` on a periodic square grid."""

    backend = "torus"
    dim = 2

    def __init__(self, phi, grid, t=0.0):
        if grid.kind != "periodic-2d":
            raise InvalidStateError("torus states need a periodic grid")
        phi = np.asarray(phi, dtype=float)
        if phi.shape != grid.shape:
            raise GridMismatchError(f"phi has shape {phi.shape}, grid expects {grid.shape}")
        _require_finite(phi, "phi")
        if t < 0:
            raise InvalidStateError("time must be nonnegative")
        self.grid = grid
        self.phi = _frozen(phi)
        self.t = float(t)
        self.h = grid.h
        self._e2 = _frozen(np.exp(2.0 * phi))

    @classmethod
    def flat(cls, n=64, length=1.0, t=0.0):
        grid = GridSpec.periodic(n, length)
        return cls(np.zeros(grid.shape), grid, t)

    def replace(self, phi=None, t=None):
        return TorusState(self.phi if phi is None else phi, self.grid, self.t if t is None else t)

    def scaled(self, a):
        return TorusState(self.phi + 0.5 * np.log(a), self.grid, self.t)

    @property
    def conformal(self):
        return self._e2

    def _d(self, v):
        h = self.h
        vx = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2 * h)
        vy = (np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)) / (2 * h)
        return vx, vy

    def flat_laplacian(self, v):
        return _kernels.lap5(np.ascontiguousarray(v, dtype=float)) / self.h**2

    def _curvature(self):
        R = -2.0 * self.flat_laplacian(self.phi) / self._e2
        K = 0.5 * R
        ric = SymTensorField(np.stack([K * self._e2, np.zeros_like(K), K * self._e2]), "coordinate", self._e2)
        rm = np.abs(K)
        return CurvatureReport(R, ric, rm, float(rm.max()))

    def laplace_beltrami(self, v):
        v = self.check_field(v)
        return self.flat_laplacian(v) / self._e2

    def gradient(self, v):
        return self._d(self.check_field(v))

    def grad_norm_sq(self, v):
        vx, vy = self.gradient(v)
        return (vx * vx + vy * vy) / self._e2

    def hessian(self, v):
        v = self.check_field(v)
        h = self.h
        vx, vy = self._d(v)
        px, py = self._d(self.phi)
        xp = np.roll(v, -1, axis=1)
        xm = np.roll(v, 1, axis=1)
        vxx = (xp - 2 * v + xm) / h**2
        vyy = (np.roll(v, -1, axis=0) - 2 * v + np.roll(v, 1, axis=0)) / h**2
        vxy = (np.roll(xp, -1, axis=0) - np.roll(xp, 1, axis=0) - np.roll(xm, -1, axis=0) + np.roll(xm, 1, axis=0)) / (
            4 * h**2
        )
        comps = np.stack([vxx - px * vx + py * vy, vxy - px * vy - py * vx, vyy - py * vy + px * vx])
        return SymTensorField(comps, "coordinate", self._e2)

    def metric_tensor(self):
        z = np.zeros_like(self._e2)
        return SymTensorField(np.stack([self._e2, z, self._e2]), "coordinate", self._e2)

    def mass_weights(self):
        return self._e2 * self.h**2

    def stiffness(self, u):
        return _kernels.lap5(np.ascontiguousarray(u, dtype=float))

    def _stiffness_diag(self):
        return 4.0

    def integrate(self, v):
        v = self.check_field(v)
        return float(np.sum(v * self._e2) * self.h**2)

    def total_volume(self):
        return float(self._e2.sum() * self.h**2)

    def wrap(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (2,) or not np.all(np.isfinite(x)):
            raise DomainError(f"torus points are finite (x, y) pairs, got {x!r}")
        return np.mod(x, np.array(self.grid.extent))

    def sample(self, v, x):
        """Periodic cubic-spline value of ``v`` at the point ``x``."""
        x = self.wrap(x)
        coords = np.array([[x[1] / self.h], [x[0] / self.h]])
        return float(map_coordinates(np.asarray(v, dtype=float), coords, order=3, mode="grid-wrap")[0])

    def nearest_index(self, x):
        x = self.wrap(x)
        n = self.grid.resolution
        return (int(np.rint(x[1] / self.h)) % n[1], int(np.rint(x[0] / self.h)) % n[0])

    def node_scale(self):
        """Local length of one grid step at every node."""
        return np.exp(self.phi) * self.h


class RadialState(MetricState):
    """Rotationally symmetric conformal metric ``e^{2 phi(r)}(dr^2 + r^2 d theta^2)``.

    Samples sit on the radial grid; ``trust_radius`` marks where reported
    quantities are still unaffected by the truncated outer end.
    """

    backend = "radial"
    dim = 2

    def __init__(self, phi, grid, t=0.0, trust_radius=None):
        if grid.kind != "radial-1d":
            raise InvalidStateError("radial states need a radial grid")
        phi = np.asarray(phi, dtype=float)
        if phi.shape != grid.shape:
            raise GridMismatchError(f"phi has shape {phi.shape}, grid expects {grid.shape}")
        _require_finite(phi, "phi")
        if t < 0:
            raise InvalidStateError("time must be nonnegative")
        self.grid = grid
        self.phi = _frozen(phi)
        self.t = float(t)
        self.mesh = _plane_mesh(grid)
        self.r = grid.r
        self._e2 = _frozen(np.exp(2.0 * phi))
        self.trust_radius = float(grid.extent[0] if trust_radius is None else trust_radius)

    @classmethod
    def from_function(cls, conformal_log, grid, t=0.0):
        return cls(conformal_log(grid.r), grid, t)

    def replace(self, phi=None, t=None, trust_radius=None):
        return RadialState(
            self.phi if phi is None else phi,
            self.grid,
            self.t if t is None else t,
            self.trust_radius if trust_radius is None else trust_radius,
        )

    def scaled(self, a):
        return RadialState(self.phi + 0.5 * np.log(a), self.grid, self.t, self.trust_radius)

    @property
    def conformal(self):
        return self._e2

    def flat_laplacian(self, v, ghost="extrapolate"):
        return self.mesh.laplacian(v, ghost)

    def _curvature(self):
        R = -2.0 * self.flat_laplacian(self.phi) / self._e2
        K = 0.5 * R
        ric = SymTensorField(np.stack([K, np.zeros_like(K), K]), "orthonormal")
        rm = np.abs(K)
        return CurvatureReport(R, ric, rm, float(rm.max()))

    def laplace_beltrami(self, v):
        v = self.check_field(v)
        return self.flat_laplacian(v) / self._e2

    def d_r(self, v):
        return self.mesh.d_r(self.check_field(v))

    def grad_norm_sq(self, v):
        vr = self.d_r(v)
        return vr * vr / self._e2

    def hessian(self, v):
        v = self.check_field(v)
        vrr, vr = self.mesh.d2_r(v)
        pr = self.mesh.d_r(self.phi)
        tang = np.empty_like(vr)
        tang[1:] = vr[1:] / self.r[1:] + pr[1:] * vr[1:]
        tang[0] = vrr[0]
        comps = np.stack([(vrr - pr * vr) / self._e2, np.zeros_like(vr), tang / self._e2])
        return SymTensorField(comps, "orthonormal")

    def metric_tensor(self):
        one = np.ones(self.shape)
        return SymTensorField(np.stack([one, 0 * one, one]), "orthonormal")

    def mass_weights(self):
        return self.mesh.volumes * self._e2

    def stiffness(self, u):
        return self.mesh.apply(u, "zero")

    def _stiffness_diag(self):
        k = self.mesh.kappa
        return k + np.concatenate(([0.0], k[:-1]))

    def integrate(self, v):
        v = self.check_field(v)
        return float(np.sum(v * self.mass_weights()))

    def radius_of(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not np.all(np.isfinite(x)) or x.size > 2:
            raise DomainError(f"radial points are (x, y) pairs or radii, got {x!r}")
        r = float(np.hypot(*x)) if x.size == 2 else float(abs(x[0]))
        if r > self.grid.extent[0] * (1 + 1e-12):
            raise DomainError(f"point at radius {r} lies outside r_max={self.grid.extent[0]}")
        return r

    def sample(self, v, x):
        return float(_even_spline(self.r, np.asarray(v, dtype=float))(self.radius_of(x)))

    def radial_distance(self):
        """Distance from the origin ``D(r) = int_0^r e^{phi}`` at every node."""
        spl = _even_spline(self.r, np.exp(self.phi))
        return spl.antiderivative()(self.r) - spl.antiderivative()(0.0)

    def circumference_radius(self):
        return self.r * np.exp(self.phi)


class HomothetyState(MetricState):
    """The metric ``c g0`` with ``g0`` the model space of constant curvature ``K0``.

    Without a grid only closed-form quantities are available. With a radial
    grid, samples are functions of the ``g0``-distance from a base point.
    """

    backend = "homothety"

    def __init__(self, n, K0, c, t=0.0, grid=None):
        n = int(n)
        if n < 2:
            raise InvalidStateError("dimension must be at least 2")
        if not (np.isfinite(c) and c > 0):
            raise InvalidStateError(f"scale factor must be positive, got {c}")
        if not np.isfinite(K0):
            raise InvalidStateError("K0 must be finite")
        if t < 0:
            raise InvalidStateError("time must be nonnegative")
        grid = GridSpec.none() if grid is None else grid
        if grid.kind == "periodic-2d":
            raise InvalidStateError("homothety states take a radial grid or none")
        if grid.kind == "radial-1d" and K0 > 0 and grid.extent[0] > pi / np.sqrt(K0) * (1 + 1e-12):
            raise InvalidStateError("radial extent exceeds the antipodal distance")
        self.dim = n
        self.K0 = float(K0)
        self.c = float(c)
        self.t = float(t)
        self.grid = grid
        self.mesh = _model_mesh(grid, n, self.K0) if grid.kind == "radial-1d" else None

    def replace(self, c=None, t=None):
        return HomothetyState(self.dim, self.K0, self.c if c is None else c, self.t if t is None else t, self.grid)

    def scaled(self, a):
        return self.replace(c=self.c * a)

    @property
    def sectional(self):
        return self.K0 / self.c

    def _need_grid(self):
        if self.mesh is None:
            raise GridMismatchError("this homothety state carries no grid")

    def _fill(self, value):
        return np.full(self.shape, value) if self.mesh is not None else np.asarray(value)

    def _curvature(self):
        n = self.dim
        K = self.sectional
        R = self._fill(n * (n - 1) * K)
        ric = SymTensorField(
            np.stack([self._fill((n - 1) * K), self._fill(0.0), self._fill((n - 1) * K)]),
            "orthonormal",
            tangential_multiplicity=n - 1,
        )
        rm = self._fill(abs(K))
        return CurvatureReport(R, ric, rm, abs(K))

    def laplace_beltrami(self, v):
        self._need_grid()
        v = self.check_field(v)
        return self.mesh.laplacian(v) / self.c

    def grad_norm_sq(self, v):
        self._need_grid()
        vr = self.mesh.d_r(self.check_field(v))
        return vr * vr / self.c

    def hessian(self, v):
        self._need_grid()
        v = self.check_field(v)
        vrr, vr = self.mesh.d2_r(v)
        rho = self.grid.r
        tang = np.empty_like(vr)
        s = sn(self.K0, rho[1:])
        with np.errstate(divide="ignore", invalid="ignore"):
            tang[1:] = np.where(np.abs(s) > 1e-14, cn(self.K0, rho[1:]) / s * vr[1:], vrr[1:])
        tang[0] = vrr[0]
        comps = np.stack([vrr, np.zeros_like(vr), tang]) / self.c
        return SymTensorField(comps, "orthonormal", tangential_multiplicity=self.dim - 1)

    def metric_tensor(self):
        one = self._fill(1.0)
        return SymTensorField(
            np.stack([one, 0 * one, one]), "orthonormal", tangential_multiplicity=self.dim - 1
        )

    def mass_weights(self):
        self._need_grid()
        return self.c ** (self.dim / 2.0) * self.mesh.volumes

    def stiffness(self, u):
        self._need_grid()
        return self.c ** (self.dim / 2.0 - 1.0) * self.mesh.apply(u, "zero")

    def _stiffness_diag(self):
        k = self.mesh.kappa
        return self.c ** (self.dim / 2.0 - 1.0) * (k + np.concatenate(([0.0], k[:-1])))

    def integrate(self, v):
        self._need_grid()
        v = self.check_field(v)
        return float(np.sum(v * self.mass_weights()))

    def base_radius_of(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not np.all(np.isfinite(x)) or x.size > self.dim:
            raise DomainError(f"points are normal-coordinate vectors of length <= {self.dim}")
        rho = float(np.linalg.norm(x))
        if self.K0 > 0 and rho > pi / np.sqrt(self.K0) * (1 + 1e-12):
            raise DomainError("point lies beyond the antipode")
        return rho

    def sample(self, v, x):
        self._need_grid()
        return float(_even_spline(self.grid.r, np.asarray(v, dtype=float))(self.base_radius_of(x)))


class ProductState(MetricState):
    """Riemannian product of a 2D base with a flat ``m``-torus of side ``flat_extent``.

    Fields live on the base grid and are constant along the flat factor.
    """

    backend = "product"

    def __init__(self, base, m, flat_extent=1.0):
        if isinstance(base, ProductState) or base.dim != 2:
            raise InvalidStateError("the base of a product must be two-dimensional")
        if int(m) < 1:
            raise InvalidStateError("a product needs at least one flat direction")
        if not flat_extent > 0:
            raise InvalidStateError("flat extent must be positive")
        self.base = base
        self.m = int(m)
        self.flat_extent = float(flat_extent)
        self.dim = 2 + self.m

    @property
    def grid(self):
        return self.base.grid

    @property
    def t(self):
        return self.base.t

    def replace(self, base=None, **kw):
        return ProductState(self.base.replace(**kw) if base is None else base, self.m, self.flat_extent)

    def scaled(self, a):
        return ProductState(self.base.scaled(a), self.m, self.flat_extent * np.sqrt(a))

    @property
    def flat_volume(self):
        return self.flat_extent**self.m

    def _extend(self, tensor, diag=0.0):
        return SymTensorField(
            tensor.components, tensor.frame, tensor.conformal, tensor.tangential_multiplicity, self.m, diag
        )

    def _curvature(self):
        rep = self.base.curvature()
        return CurvatureReport(rep.R, self._extend(rep.Ric), rep.rm_norm, rep.sup_rm)

    def laplace_beltrami(self, v):
        return self.base.laplace_beltrami(v)

    def grad_norm_sq(self, v):
        return self.base.grad_norm_sq(v)

    def gradient(self, v):
        return self.base.gradient(v)

    def hessian(self, v):
        return self._extend(self.base.hessian(v))

    def metric_tensor(self):
        return self._extend(self.base.metric_tensor(), 1.0)

    def mass_weights(self):
        return self.base.mass_weights() * self.flat_volume

    def stiffness(self, u):
        return self.base.stiffness(u) * self.flat_volume

    def _stiffness_diag(self):
        return self.base._stiffness_diag() * self.flat_volume

    def integrate(self, v):
        return self.base.integrate(v) * self.flat_volume

    def sample(self, v, x):
        return self.base.sample(v, np.asarray(x, dtype=float)[:2])
