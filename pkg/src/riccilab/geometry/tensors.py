"""Symmetric 2-tensor fields and curvature reports."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True, eq=False)
class SymTensorField:
    """Samples of a symmetric 2-tensor.

    ``components`` stacks ``(xx, xy, yy)`` in the conformal coordinate frame
    (``frame="coordinate"``, with ``conformal = e^{2 phi}`` for raising
    indices) or ``(rr, 0, tt)`` in an orthonormal radial frame, where the
    tangential entry repeats ``tangential_multiplicity`` times. Product
    backends append ``flat_dims`` orthonormal flat directions carrying the
    diagonal value ``flat_diag``.
    """

    components: np.ndarray
    frame: str
    conformal: np.ndarray | None = None
    tangential_multiplicity: int = 1
    flat_dims: int = 0
    flat_diag: float | np.ndarray = 0.0

    def _compatible(self, other):
        return (
            self.frame == other.frame
            and self.tangential_multiplicity == other.tangential_multiplicity
            and self.flat_dims == other.flat_dims
            and self.components.shape == other.components.shape
        )

    def __add__(self, other):
        if not isinstance(other, SymTensorField) or not self._compatible(other):
            return NotImplemented
        return replace(
            self,
            components=self.components + other.components,
            flat_diag=self.flat_diag + other.flat_diag,
        )

    def __mul__(self, scalar):
        return replace(self, components=self.components * scalar, flat_diag=self.flat_diag * scalar)

    __rmul__ = __mul__

    @property
    def xx(self):
        return self.components[0]

    @property
    def xy(self):
        return self.components[1]

    @property
    def yy(self):
        return self.components[2]

    def norm_sq(self):
        """Pointwise squared norm with respect to the metric."""
        a, b, c = self.components
        if self.frame == "coordinate":
            out = (a * a + 2 * b * b + c * c) / self.conformal**2
        else:
            out = a * a + 2 * b * b + self.tangential_multiplicity * c * c
        return out + self.flat_dims * np.square(self.flat_diag)

    def trace(self):
        a, _, c = self.components
        if self.frame == "coordinate":
            out = (a + c) / self.conformal
        else:
            out = a + self.tangential_multiplicity * c
        return out + self.flat_dims * self.flat_diag


@dataclass(frozen=True, eq=False)
class CurvatureReport:
    """Scalar curvature, Ricci tensor and |Rm| of one metric state.

    ``rm_norm`` is the largest absolute sectional curvature; in two
    dimensions that is ``|K| = |R|/2``.
    """

    R: np.ndarray
    Ric: SymTensorField
    rm_norm: np.ndarray
    sup_rm: float
