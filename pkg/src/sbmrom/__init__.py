"""Embedded-boundary Stokes flow on a fixed background mesh with
POD-Galerkin model reduction."""

from .assembly import (
    BlockSystem,
    FieldSolution,
    ProblemConfig,
    assemble_poisson,
    assemble_stokes,
    solve_fom,
)
from .geometry import (
    GeometryParams,
    Projection,
    SurrogateDomain,
    build_surrogate,
    closest_point,
    signed_distance,
)
from .mesh import TriMesh, assemble_mass, generate_structured, load_mesh
from .rom import (
    PodBasis,
    ReducedSolution,
    ReducedSystem,
    collect_snapshots,
    enrich,
    pod,
    project,
    relative_error,
    sample_parameters,
    solve_rom,
    supremizer_snapshots,
)

__version__ = "0.1.0"

__all__ = [
    "BlockSystem",
    "FieldSolution",
    "GeometryParams",
    "PodBasis",
    "ProblemConfig",
    "Projection",
    "ReducedSolution",
    "ReducedSystem",
    "SurrogateDomain",
    "TriMesh",
    "assemble_mass",
    "assemble_poisson",
    "assemble_stokes",
    "build_surrogate",
    "closest_point",
    "collect_snapshots",
    "enrich",
    "generate_structured",
    "load_mesh",
    "pod",
    "project",
    "relative_error",
    "sample_parameters",
    "signed_distance",
    "solve_fom",
    "solve_rom",
    "supremizer_snapshots",
]
