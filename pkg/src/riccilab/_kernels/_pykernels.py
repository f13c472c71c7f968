"""Numpy implementations of the stencil kernels (fallback path)."""
import numpy as np


def lap5(u):
    return (
        np.roll(u, 1, axis=0)
        + np.roll(u, -1, axis=0)
        + np.roll(u, 1, axis=1)
        + np.roll(u, -1, axis=1)
        - 4.0 * u
    )


def ricci_rhs_torus(phi, inv_h2):
    return np.exp(-2.0 * phi) * lap5(phi) * inv_h2


def torus_heat_stage(u0, u, inv_m, dt, a, out):
    out[...] = a * u0 + (1.0 - a) * (u + dt * inv_m * lap5(u))


def torus_conjugate_stage(m0, m, inv_m, dt, a, out):
    out[...] = a * m0 + (1.0 - a) * (m + dt * lap5(m * inv_m))


def flux_apply(u, kappa, ghost):
    right = np.empty_like(u)
    right[:-1] = u[1:]
    right[-1] = ghost
    flux = kappa * (right - u)
    out = flux.copy()
    out[1:] -= flux[:-1]
    return out


def radial_heat_stage(u0, u, inv_m, kappa, dt, a, out):
    out[...] = a * u0 + (1.0 - a) * (u + dt * inv_m * flux_apply(u, kappa, 0.0))


def radial_conjugate_stage(m0, m, inv_m, kappa, dt, a, out):
    out[...] = a * m0 + (1.0 - a) * (m + dt * flux_apply(m * inv_m, kappa, 0.0))
