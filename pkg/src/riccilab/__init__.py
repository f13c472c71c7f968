"""Numerical laboratory for type III Ricci flows on symmetric model metrics."""
from ._kernels import BACKEND
from .errors import RiccilabError

__version__ = "0.1.0"

__all__ = ["BACKEND", "RiccilabError", "__version__"]
