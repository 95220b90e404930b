"""Fitted mesh generation and mesh file I/O."""
from .fitted import DomainSpec, fitted_mesh, generate_fitted, remesh_keep_interface, validate_interface
from .msh import MshData, load_fitted, load_msh, save_msh

__all__ = ["DomainSpec", "MshData", "fitted_mesh", "generate_fitted", "load_fitted", "load_msh",
           "remesh_keep_interface", "save_msh", "validate_interface"]
