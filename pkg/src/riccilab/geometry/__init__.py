"""Symmetric metric states, their curvature, operators, distances and volumes."""
from .distance import ball_volume, distance_field, geodesic_distance
from .grid import GridSpec
from .states import HomothetyState, MetricState, ProductState, RadialState, TorusState
from .tensors import CurvatureReport, SymTensorField


def curvature(state):
    return state.curvature()


def laplace_beltrami(state, v):
    return state.laplace_beltrami(v)


def hessian(state, v):
    return state.hessian(v)


def grad_norm_sq(state, v):
    return state.grad_norm_sq(v)


def integrate(state, v):
    return state.integrate(v)


__all__ = [
    "GridSpec",
    "MetricState",
    "TorusState",
    "RadialState",
    "HomothetyState",
    "ProductState",
    "SymTensorField",
    "CurvatureReport",
    "curvature",
    "laplace_beltrami",
    "hessian",
    "grad_norm_sq",
    "integrate",
    "geodesic_distance",
    "ball_volume",
    "distance_field",
]
