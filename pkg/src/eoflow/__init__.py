"""Finite element solver and verification harness for electro-osmotic
micro-channel flow."""

__version__ = "0.1.0"

from . import assembly, config, fem, mesh, mms, scheme, sparsela, verify, vtkio  # noqa: F401
