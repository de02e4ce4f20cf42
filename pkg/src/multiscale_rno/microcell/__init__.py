"""Periodic unit-cell solvers and effective-property extraction."""
from .evolve import Kinetics, advance_interface, evolve_interface
from .geometry import CellGrid, build_microstructure, reinitialize
from .stokes import FlowSolution, solve_stokes_cell
from .trajectory import CellConfig, run_cell_trajectory
from .transport import (
    ChiSolution,
    PoreVelocity,
    compute_drift_velocity,
    compute_effective_properties,
    compute_pore_velocity,
    solve_cell_properties,
    solve_chi_cell,
)


def write_level_set_vtk(path, grid: CellGrid):
    from ..io import write_vtk_structured_points

    write_vtk_structured_points(path, {"phi": grid.phi}, (grid.h, grid.h), title="level set")


__all__ = [
    "CellConfig", "CellGrid", "ChiSolution", "FlowSolution", "Kinetics", "PoreVelocity",
    "advance_interface", "build_microstructure", "compute_drift_velocity",
    "compute_effective_properties", "compute_pore_velocity", "evolve_interface",
    "reinitialize", "run_cell_trajectory", "solve_cell_properties", "solve_chi_cell",
    "solve_stokes_cell", "write_level_set_vtk",
]
