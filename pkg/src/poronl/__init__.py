"""Finite element solver for poroelasticity with secondary consolidation.

Taylor-Hood P2/P1/P1 discretization of the (u, xi, eta) formulation with
Crank-Nicolson or backward Euler time stepping and a scaled recursion for
the exponential history integral.
"""
from .errors import (
    ConfigError,
    DivergenceError,
    IncompressibleLimitError,
    MeshError,
    OrderUndefined,
    PoronlError,
    SolverError,
)
from .mesh import BoundaryTag, TriMesh, build_rectangle_mesh, build_unit_square_mesh
from .fe_basis import build_dof_layout, make_quadrature, make_ref_element
from .mms import PhysicalParams, derive_params, make_example
from .assembly import assemble_forms, assemble_load
from .scheme import SchemeConfig, StateVec, initialize, step
from .analysis import error_norms, observed_order
from .driver import run_simulation

__version__ = "0.1.0"
