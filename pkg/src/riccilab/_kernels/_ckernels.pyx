# cython: language_level=3
"""Compiled stencil kernels.

Every routine here has a numpy twin in ``_pykernels`` with the same
signature; ``riccilab._kernels`` picks one at import time.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def lap5(const double[:, ::1] u):
    """Periodic 5-point difference (neighbour sum minus 4u), unscaled."""
    cdef Py_ssize_t ny = u.shape[0], nx = u.shape[1]
    cdef Py_ssize_t i, j, im, ip, jm, jp
    out = np.empty((ny, nx), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(ny):
            im = i - 1 if i > 0 else ny - 1
            ip = i + 1 if i < ny - 1 else 0
            for j in range(nx):
                jm = j - 1 if j > 0 else nx - 1
                jp = j + 1 if j < nx - 1 else 0
                o[i, j] = u[im, j] + u[ip, j] + u[i, jm] + u[i, jp] - 4.0 * u[i, j]
    return out


def ricci_rhs_torus(const double[:, ::1] phi, double inv_h2):
    """Right-hand side e^{-2 phi} Lap0(phi) of the conformal Ricci flow."""
    cdef Py_ssize_t ny = phi.shape[0], nx = phi.shape[1]
    cdef Py_ssize_t i, j, im, ip, jm, jp
    out = np.empty((ny, nx), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double lap
    with nogil:
        for i in range(ny):
            im = i - 1 if i > 0 else ny - 1
            ip = i + 1 if i < ny - 1 else 0
            for j in range(nx):
                jm = j - 1 if j > 0 else nx - 1
                jp = j + 1 if j < nx - 1 else 0
                lap = phi[im, j] + phi[ip, j] + phi[i, jm] + phi[i, jp] - 4.0 * phi[i, j]
                o[i, j] = exp(-2.0 * phi[i, j]) * lap * inv_h2
    return out


def torus_heat_stage(const double[:, ::1] u0, const double[:, ::1] u,
                     const double[:, ::1] inv_m, double dt, double a,
                     double[:, ::1] out):
    """out = a*u0 + (1-a)*(u + dt * inv_m * L u) for the forward heat equation."""
    cdef Py_ssize_t ny = u.shape[0], nx = u.shape[1]
    cdef Py_ssize_t i, j, im, ip, jm, jp
    cdef double lap, b = 1.0 - a
    with nogil:
        for i in range(ny):
            im = i - 1 if i > 0 else ny - 1
            ip = i + 1 if i < ny - 1 else 0
            for j in range(nx):
                jm = j - 1 if j > 0 else nx - 1
                jp = j + 1 if j < nx - 1 else 0
                lap = u[im, j] + u[ip, j] + u[i, jm] + u[i, jp] - 4.0 * u[i, j]
                out[i, j] = a * u0[i, j] + b * (u[i, j] + dt * inv_m[i, j] * lap)


def torus_conjugate_stage(const double[:, ::1] m0, const double[:, ::1] m,
                          const double[:, ::1] inv_m, double dt, double a,
                          double[:, ::1] out):
    """out = a*m0 + (1-a)*(m + dt * L(inv_m * m)) for the density form."""
    cdef Py_ssize_t ny = m.shape[0], nx = m.shape[1]
    cdef Py_ssize_t i, j, im, ip, jm, jp
    cdef double lap, b = 1.0 - a
    with nogil:
        for i in range(ny):
            im = i - 1 if i > 0 else ny - 1
            ip = i + 1 if i < ny - 1 else 0
            for j in range(nx):
                jm = j - 1 if j > 0 else nx - 1
                jp = j + 1 if j < nx - 1 else 0
                lap = (m[im, j] * inv_m[im, j] + m[ip, j] * inv_m[ip, j]
                       + m[i, jm] * inv_m[i, jm] + m[i, jp] * inv_m[i, jp]
                       - 4.0 * m[i, j] * inv_m[i, j])
                out[i, j] = a * m0[i, j] + b * (m[i, j] + dt * lap)


def flux_apply(const double[::1] u, const double[::1] kappa, double ghost):
    """Radial finite-volume operator sum of kappa-weighted differences.

    kappa[i] couples node i to node i+1; the last entry couples the final
    node to a ghost value.
    """
    cdef Py_ssize_t n = u.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double right
    with nogil:
        for i in range(n):
            right = u[i + 1] if i < n - 1 else ghost
            o[i] = kappa[i] * (right - u[i])
            if i > 0:
                o[i] -= kappa[i - 1] * (u[i] - u[i - 1])
    return out


def radial_heat_stage(const double[::1] u0, const double[::1] u,
                      const double[::1] inv_m, const double[::1] kappa,
                      double dt, double a, double[::1] out):
    """Radial analogue of ``torus_heat_stage`` with absorbing outer ghost."""
    cdef Py_ssize_t n = u.shape[0], i
    cdef double right, lu, b = 1.0 - a
    with nogil:
        for i in range(n):
            right = u[i + 1] if i < n - 1 else 0.0
            lu = kappa[i] * (right - u[i])
            if i > 0:
                lu -= kappa[i - 1] * (u[i] - u[i - 1])
            out[i] = a * u0[i] + b * (u[i] + dt * inv_m[i] * lu)


def radial_conjugate_stage(const double[::1] m0, const double[::1] m,
                           const double[::1] inv_m, const double[::1] kappa,
                           double dt, double a, double[::1] out):
    """Radial analogue of ``torus_conjugate_stage`` with absorbing outer ghost."""
    cdef Py_ssize_t n = m.shape[0], i
    cdef double right, here, lu, b = 1.0 - a
    with nogil:
        for i in range(n):
            here = m[i] * inv_m[i]
            right = m[i + 1] * inv_m[i + 1] if i < n - 1 else 0.0
            lu = kappa[i] * (right - here)
            if i > 0:
                lu -= kappa[i - 1] * (here - m[i - 1] * inv_m[i - 1])
            out[i] = a * m0[i] + b * (m[i] + dt * lu)
