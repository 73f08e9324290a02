"""Barrier and entropic relaxations of classical and quantum optimal transport."""

from .classical import ClassicalInstance, MarginalFamily
from .quantum import DensityFamily, QuantumInstance
from .tensor import ProductOperator

__all__ = [
    "ClassicalInstance",
    "DensityFamily",
    "MarginalFamily",
    "ProductOperator",
    "QuantumInstance",
]
__version__ = "0.1.0"
