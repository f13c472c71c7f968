"""Hot stencil kernels with a compiled core and a numpy fallback.

The compiled module is preferred; set ``RICCILAB_PURE_PYTHON=1`` to force the
fallback. ``BACKEND`` names the implementation in use.
"""
import os

from . import _pykernels as python_impl

compiled_impl = None
if os.environ.get("RICCILAB_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as compiled_impl
    except ImportError:  # extension not built
        compiled_impl = None

_impl = compiled_impl if compiled_impl is not None else python_impl
BACKEND = "cython" if compiled_impl is not None else "python"

lap5 = _impl.lap5
ricci_rhs_torus = _impl.ricci_rhs_torus
torus_heat_stage = _impl.torus_heat_stage
torus_conjugate_stage = _impl.torus_conjugate_stage
flux_apply = _impl.flux_apply
radial_heat_stage = _impl.radial_heat_stage
radial_conjugate_stage = _impl.radial_conjugate_stage

__all__ = [
    "BACKEND",
    "compiled_impl",
    "python_impl",
    "lap5",
    "ricci_rhs_torus",
    "torus_heat_stage",
    "torus_conjugate_stage",
    "flux_apply",
    "radial_heat_stage",
    "radial_conjugate_stage",
]
