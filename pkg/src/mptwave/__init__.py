"""Polarizability tensors and far-field perturbations of small penetrable objects."""

from .core import (ContrastSet, DomainError, Excitation, MaterialSpec, ObjectPlacement, Rank2TensorC,
                   Rank3TensorC, Regime, classify_regime, derive_contrasts)
from .mesh import UnitShape
from .pipeline import MeshSettings, RunSettings, compute
from .tensors import TensorBundle

__version__ = "0.1.0"

__all__ = ["ContrastSet", "DomainError", "Excitation", "MaterialSpec", "ObjectPlacement", "Rank2TensorC",
           "Rank3TensorC", "Regime", "classify_regime", "derive_contrasts", "MeshSettings", "RunSettings",
           "compute", "TensorBundle", "UnitShape"]
