"""Geological-scale Darcy flow and solute transport driven by the surrogate."""
from .darcy import DarcyBC, DarcySolution, regularize_permeability, solve_darcy, tag_flux
from .mesh import SIDES, GeoMesh
from .scenario import BUNDLED, ScenarioConfig, bundled_scenario
from .simulate import (
    DIAG_HEADER,
    GeoState,
    RunRecord,
    calibrate_xi,
    compute_well_flux,
    initial_state,
    load_record,
    run_multiscale,
    update_properties,
    write_run,
)
from .transport import TransportBC, TransportConfig, TransportSolution, solve_transport, tag_solute_flux
from .validate import a_posteriori_validate, clogging_time

__all__ = [
    "BUNDLED", "DIAG_HEADER", "DarcyBC", "DarcySolution", "GeoMesh", "GeoState", "RunRecord", "SIDES",
    "ScenarioConfig", "TransportBC", "TransportConfig", "TransportSolution", "a_posteriori_validate",
    "bundled_scenario", "calibrate_xi", "clogging_time", "compute_well_flux", "initial_state", "load_record",
    "regularize_permeability", "run_multiscale", "solve_darcy", "solve_transport", "tag_flux",
    "tag_solute_flux", "update_properties", "write_run",
]
