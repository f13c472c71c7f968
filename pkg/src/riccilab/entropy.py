"""The expander entropy W+, its time derivative and the soliton defect.

For a positive density ``u = (4 pi sigma)^{-n/2} e^{-f}``::

    W+ = int [sigma (|grad f|^2 + R) - f + n] u dv

and along a conjugate heat kernel coupled to the flow, with
``sigma = t - T``, ``dW+/dt = int 2 sigma |Rc + Hess f + g/(2 sigma)|^2 u dv``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientRangeError, InvalidStateError, MassCheckError
from .geometry import HomothetyState
from .geometry.tensors import SymTensorField


def _n(state):
    return state.dim


def f_from_u(state, u, sigma):
    """Potential ``f = -log u - (n/2) log(4 pi sigma)``."""
    if not sigma > 0:
        raise InvalidStateError("sigma must be positive")
    u = state.check_field(u, "u")
    if np.any(u <= 0):
        raise InvalidStateError("u must be strictly positive")
    return -np.log(u) - 0.5 * _n(state) * np.log(4.0 * np.pi * sigma)


def u_from_f(state, f, sigma):
    return (4.0 * np.pi * sigma) ** (-0.5 * _n(state)) * np.exp(-np.asarray(f, dtype=float))


def compute_Wplus(state, u, sigma, form="grad_f", mass_tol=1e-3):
    """Evaluate W+ for the density ``u`` at parameter ``sigma``.

    ``form="grad_u"`` swaps ``|grad f|^2`` for ``|grad u|^2``; it exists only
    to compare against that variant of the functional.
    """
    if not sigma > 0:
        raise InvalidStateError("sigma must be positive")
    u = state.check_field(u, "u")
    if np.any(u <= 0):
        raise InvalidStateError("u must be strictly positive")
    mass = state.integrate(u)
    if abs(mass - 1.0) > mass_tol:
        raise MassCheckError(f"density has mass {mass:.6g}, expected 1 +- {mass_tol:g}")
    f = f_from_u(state, u, sigma)
    grad = state.grad_norm_sq(f) if form == "grad_f" else state.grad_norm_sq(u)
    R = state.curvature().R
    integrand = (sigma * (grad + R) - f + _n(state)) * u
    return float(state.integrate(integrand))


def soliton_defect(state, f, sigma, u=None):
    """Defect tensor ``Rc + Hess f + g/(2 sigma)`` and ``int |.|^2 u dv``.

    ``u`` defaults to ``(4 pi sigma)^{-n/2} e^{-f}``. A homothety without a
    grid accepts a constant ``f`` and returns ``None`` for the integral.
    """
    if not sigma > 0:
        raise InvalidStateError("sigma must be positive")
    if isinstance(state, HomothetyState) and state.mesh is None:
        f = np.asarray(f, dtype=float)
        if f.ndim != 0 or not np.isfinite(f):
            raise InvalidStateError("grid-free homothety states take a constant potential")
        n = state.dim
        coef = (n - 1) * state.sectional + 0.5 / sigma
        tensor = SymTensorField(
            np.array([coef, 0.0, coef]), "orthonormal", tangential_multiplicity=n - 1
        )
        return tensor, None
    f = state.check_field(f, "f")
    tensor = state.curvature().Ric + state.hessian(f) + state.metric_tensor() * (0.5 / sigma)
    weight = u_from_f(state, f, sigma) if u is None else state.check_field(u, "u")
    return tensor, float(state.integrate(tensor.norm_sq() * weight))


@dataclass
class EntropyRecord:
    t: float
    sigma: float
    W_plus: float
    defect_norm_sq_integral: float
    f: np.ndarray = field(repr=False, default=None)


@dataclass
class EntropySeries:
    """W+ along a conjugate kernel with measured and predicted derivatives.

    ``dW_meas`` uses centred differences (NaN at the two ends);
    ``dW_pred`` is ``int 2 sigma |defect|^2 u dv``.
    ``dW_pred_unweighted`` drops the ``u`` weight and is kept for debugging.
    """

    records: list
    t: np.ndarray
    sigma: np.ndarray
    W_plus: np.ndarray
    dW_meas: np.ndarray
    dW_pred: np.ndarray
    defect_integral: np.ndarray
    dW_pred_unweighted: np.ndarray

    def rows(self):
        for i in range(len(self.t)):
            yield {
                "t": self.t[i],
                "sigma": self.sigma[i],
                "W_plus": self.W_plus[i],
                "dW_meas": self.dW_meas[i],
                "dW_pred": self.dW_pred[i],
                "defect_integral": self.defect_integral[i],
            }


def centred_derivative(t, y):
    """Second-order derivative on a nonuniform grid; NaN at the endpoints."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    d = np.full_like(y, np.nan)
    h0 = t[1:-1] - t[:-2]
    h1 = t[2:] - t[1:-1]
    d[1:-1] = (h0**2 * y[2:] - h1**2 * y[:-2] + (h1**2 - h0**2) * y[1:-1]) / (h0 * h1 * (h0 + h1))
    return d


def Wplus_derivative_series(trace, kernel, T=0.0, times=None, mass_tol=1e-3):
    """Entropy series along a conjugate kernel, with ``sigma = t - T``."""
    if kernel.direction != "conjugate":
        raise InvalidStateError("entropy monotonicity is stated along conjugate kernels")
    times = kernel.times if times is None else np.asarray(times, dtype=float)
    times = np.array([t for t in times if t - T > 0])
    if len(times) < 3:
        raise InsufficientRangeError("need at least three stored times with t > T")
    recs, pred, unweighted = [], [], []
    for t in times:
        st = trace.state_at(t)
        u = kernel.u_at(t)
        sigma = t - T
        W = compute_Wplus(st, u, sigma, mass_tol=mass_tol)
        f = f_from_u(st, u, sigma)
        tensor, integral = soliton_defect(st, f, sigma, u)
        recs.append(EntropyRecord(float(t), float(sigma), W, integral, f))
        pred.append(2.0 * sigma * integral)
        unweighted.append(2.0 * sigma * st.integrate(tensor.norm_sq()))
    W = np.array([r.W_plus for r in recs])
    return EntropySeries(
        recs,
        times,
        times - T,
        W,
        centred_derivative(times, W),
        np.array(pred),
        np.array([r.defect_norm_sq_integral for r in recs]),
        np.array(unweighted),
    )


def flat_kernel_entropy_rate(s, sink=6.0, n=2):
    """``dW+/ds`` for the flat conjugate kernel sunk at ``sink`` with ``T = 0``."""
    a = sink - s
    return 2.0 * n * s * ((a + s) / (2.0 * a * s)) ** 2


__all__ = [
    "EntropyRecord",
    "EntropySeries",
    "f_from_u",
    "u_from_f",
    "compute_Wplus",
    "soliton_defect",
    "Wplus_derivative_series",
    "centred_derivative",
    "flat_kernel_entropy_rate",
]
