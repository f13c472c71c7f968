"""Grid descriptions for the periodic and radial discretisations."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..errors import InvalidStateError

KINDS = ("periodic-2d", "radial-1d", "none")
STRETCHES = ("uniform", "quadratic", "sinh")
MIN_RESOLUTION = 16


@dataclass(frozen=True)
class GridSpec:
    """Sampling layout of a metric state.

    Periodic grids are square cells of side ``extent / resolution`` with the
    first sample at the origin. Radial grids sample ``r(xi)`` at uniformly
    spaced ``xi`` starting at the origin and ending at ``extent``; the map
    ``r(xi)`` is odd so that even reflection through the origin stays exact.
    """

    kind: str
    resolution: tuple = ()
    extent: tuple = ()
    stretch: str = "uniform"
    stretch_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidStateError(f"unknown grid kind {self.kind!r}")
        if self.kind == "none":
            return
        res = tuple(int(n) for n in np.atleast_1d(self.resolution))
        ext = tuple(float(e) for e in np.atleast_1d(self.extent))
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "extent", ext)
        if any(n < MIN_RESOLUTION for n in res):
            raise InvalidStateError(f"resolution must be >= {MIN_RESOLUTION}, got {res}")
        if any(not np.isfinite(e) or e <= 0 for e in ext):
            raise InvalidStateError(f"extent must be positive, got {ext}")
        if self.kind == "periodic-2d":
            if len(res) != 2 or len(ext) != 2:
                raise InvalidStateError("periodic grids need two resolutions and extents")
            if not np.isclose(ext[0] / res[0], ext[1] / res[1], rtol=1e-12):
                raise InvalidStateError("periodic grids must have square cells")
        else:
            if len(res) != 1 or len(ext) != 1:
                raise InvalidStateError("radial grids take one resolution and extent")
            if self.stretch not in STRETCHES:
                raise InvalidStateError(f"unknown stretch {self.stretch!r}")
            if self.stretch_scale <= 0:
                raise InvalidStateError("stretch_scale must be positive")

    @classmethod
    def periodic(cls, n, length=1.0):
        return cls("periodic-2d", (n, n), (length, length))

    @classmethod
    def radial(cls, n, r_max, stretch="uniform", scale=1.0):
        return cls("radial-1d", (n,), (r_max,), stretch, scale)

    @classmethod
    def none(cls):
        return cls("none")

    # periodic helpers -------------------------------------------------
    @property
    def shape(self):
        if self.kind == "periodic-2d":
            return (self.resolution[1], self.resolution[0])
        if self.kind == "radial-1d":
            return (self.resolution[0],)
        return ()

    @property
    def h(self):
        """Cell size of a periodic grid, or the uniform xi step of a radial one."""
        if self.kind == "periodic-2d":
            return self.extent[0] / self.resolution[0]
        if self.kind == "radial-1d":
            return self.xi_max / (self.resolution[0] - 1)
        raise AttributeError("grid kind 'none' has no spacing")

    @cached_property
    def xy(self):
        """Coordinate arrays ``(X, Y)`` of a periodic grid, indexed ``[iy, ix]``."""
        h = self.h
        x = np.arange(self.resolution[0]) * h
        y = np.arange(self.resolution[1]) * h
        return np.meshgrid(x, y, indexing="xy")

    # radial mapping ----------------------------------------------------
    def r_of_xi(self, xi):
        xi = np.asarray(xi, dtype=float)
        ell = self.stretch_scale
        if self.stretch == "uniform":
            return xi.copy()
        if self.stretch == "quadratic":
            return xi * np.sqrt(1.0 + (xi / ell) ** 2)
        return ell * np.sinh(xi / ell)

    def dr_dxi(self, xi):
        xi = np.asarray(xi, dtype=float)
        ell = self.stretch_scale
        if self.stretch == "uniform":
            return np.ones_like(xi)
        if self.stretch == "quadratic":
            q = (xi / ell) ** 2
            return (1.0 + 2.0 * q) / np.sqrt(1.0 + q)
        return np.cosh(xi / ell)

    def d2r_dxi2(self, xi):
        xi = np.asarray(xi, dtype=float)
        ell = self.stretch_scale
        if self.stretch == "uniform":
            return np.zeros_like(xi)
        if self.stretch == "quadratic":
            q = (xi / ell) ** 2
            return xi * (3.0 + 2.0 * q) / (ell**2 * (1.0 + q) ** 1.5)
        return np.sinh(xi / ell) / ell

    def xi_of_r(self, r):
        r = np.asarray(r, dtype=float)
        ell = self.stretch_scale
        if self.stretch == "uniform":
            return r.copy()
        if self.stretch == "quadratic":
            return ell * np.sqrt((np.sqrt(1.0 + 4.0 * (r / ell) ** 2) - 1.0) / 2.0)
        return ell * np.arcsinh(r / ell)

    @cached_property
    def xi_max(self):
        return float(self.xi_of_r(self.extent[0]))

    @cached_property
    def xi(self):
        return np.linspace(0.0, self.xi_max, self.resolution[0])

    @cached_property
    def r(self):
        r = self.r_of_xi(self.xi)
        r[-1] = self.extent[0]
        return r

    @cached_property
    def xi_half(self):
        """Cell faces ``xi_{i+1/2}`` for i = 0..N-1 (the last one lies outside)."""
        return self.xi + 0.5 * self.h
