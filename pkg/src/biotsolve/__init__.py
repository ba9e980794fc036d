"""Stabilized finite elements and preconditioned iterative solvers for the Biot model."""

from .assembly import BiotSystem, DofLayout, PhysicalParams, assemble_system, count_dofs
from .bench import CaseConfig, run_case, run_table
from .mesh import TriMesh, build_structured_mesh
from .preconditioners import BlockPreconditioner, InnerSolverSpec, SchurApprox, build_block_preconditioner
from .solvers import SolveReport, anderson_uzawa, gmres, uzawa, uzawa_fixed_point_map, variable_uzawa
from .spectral import SpectrumReport, infsup_spectrum, schur_spectrum

__version__ = "0.1.0"

__all__ = [
    "BiotSystem",
    "BlockPreconditioner",
    "CaseConfig",
    "DofLayout",
    "InnerSolverSpec",
    "PhysicalParams",
    "SchurApprox",
    "SolveReport",
    "SpectrumReport",
    "TriMesh",
    "anderson_uzawa",
    "assemble_system",
    "build_block_preconditioner",
    "build_structured_mesh",
    "count_dofs",
    "gmres",
    "infsup_spectrum",
    "run_case",
    "run_table",
    "schur_spectrum",
    "uzawa",
    "uzawa_fixed_point_map",
    "variable_uzawa",
]
