"""Finite-volume bookkeeping for rotationally symmetric grids.

A radial mesh samples a warped product ``dr^2 + b(r)^2 dOmega^{n-1}`` (or its
conformal rescaling) at the nodes of a :class:`GridSpec`. Node ``i`` owns the
dual cell between the faces ``r_{i-1/2}`` and ``r_{i+1/2}``; the innermost
cell starts at the origin. Face fluxes use the uniform ``xi`` spacing and the
chain rule, which keeps the scheme second order on smooth stretchings.
"""
from __future__ import annotations

import numpy as np

from .. import _kernels

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _cell_integrals(warp, a, b):
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    return half * (warp(pts) * _GL_W[None, :]).sum(axis=1)


class RadialMesh:
    """Cell volumes, face couplings and xi-derivatives for a radial grid.

    ``warp(r)`` is the area of the geodesic sphere of radius ``r`` in the
    reference metric (``2 pi r`` for the flat plane). ``r_end`` closes the
    outer end (the antipode of a round sphere) when given.
    """

    def __init__(self, grid, warp, r_end=None):
        self.grid = grid
        self.h = grid.h
        self.r = grid.r
        self.r_xi = grid.dr_dxi(grid.xi)
        self.r_xixi = grid.d2r_dxi2(grid.xi)
        self.closed = r_end is not None
        faces = grid.r_of_xi(grid.xi_half)
        faces_dr = grid.dr_dxi(grid.xi_half)
        if self.closed:
            faces = np.minimum(faces, r_end)
        lower = np.concatenate(([0.0], faces[:-1]))
        self.volumes = _cell_integrals(warp, lower, faces)
        self.kappa = warp(faces) / (faces_dr * self.h)
        if self.closed:
            self.kappa[-1] = 0.0
        self.kappa = np.ascontiguousarray(self.kappa)
        r_ghost = float(grid.r_of_xi(grid.xi_max + self.h))
        self._log_ratio = np.log(r_ghost / self.r[-1]) / np.log(self.r[-1] / self.r[-2])

    def apply(self, v, ghost="extrapolate"):
        """Unnormalised flux divergence ``L v`` (so ``L v / volumes`` ~ Laplacian)."""
        v = np.ascontiguousarray(v, dtype=float)
        if self.closed or ghost == "zero":
            g = 0.0
        elif ghost == "extrapolate":
            # linear in log r: exact for the harmonic far field a + b log r
            g = v[-1] + (v[-1] - v[-2]) * self._log_ratio
        else:
            raise ValueError(f"unknown ghost mode {ghost!r}")
        return _kernels.flux_apply(v, self.kappa, float(g))

    def laplacian(self, v, ghost="extrapolate"):
        return self.apply(v, ghost) / self.volumes

    def d_xi(self, v):
        h = self.h
        dv = np.empty_like(v, dtype=float)
        dv[1:-1] = (v[2:] - v[:-2]) / (2 * h)
        dv[0] = 0.0
        if self.closed:
            dv[-1] = 0.0
        else:
            dv[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
        return dv

    def d2_xi(self, v):
        h = self.h
        d2 = np.empty_like(v, dtype=float)
        d2[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
        d2[0] = 2 * (v[1] - v[0]) / h**2
        if self.closed:
            d2[-1] = 2 * (v[-2] - v[-1]) / h**2
        else:
            d2[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h**2
        return d2

    def d_r(self, v):
        return self.d_xi(v) / self.r_xi

    def d2_r(self, v):
        vr = self.d_r(v)
        return (self.d2_xi(v) - self.r_xixi * vr) / self.r_xi**2, vr
