"""Driver that labels an input history with cell-solve outputs."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import MultiscaleError, TrajectoryError
from ..types import EffectiveProps, PropsSeries, Trajectory
from .evolve import Kinetics, advance_interface
from .geometry import CellGrid
from .stokes import solve_stokes_cell
from .transport import solve_cell_properties


@dataclass
class CellConfig:
    pe: float = 1000.0
    da: float = 1.0
    nu: float = 1.0
    kinetics: Kinetics = field(default_factory=Kinetics)
    cfl: float = 0.5

    def to_dict(self):
        d = asdict(self)
        d["kinetics"] = self.kinetics.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        kin = Kinetics(**d.pop("kinetics", {}))
        return cls(kinetics=kin, **d)


def run_cell_trajectory(grid0: CellGrid, traj: Trajectory, cfg: CellConfig | None = None,
                        keep_grids: bool = False):
    """Label ``traj`` with effective properties from the cell solves.

    At each time t_n the cell problems are solved with v0(t_n) on the current
    microstructure, then the interface is advanced to t_{n+1} with c0(t_n).
    Returns a PropsSeries (and the grid history if ``keep_grids``).
    """
    cfg = cfg or CellConfig()
    grid = grid0.copy()
    props: list[EffectiveProps] = []
    grids = []
    flow = None
    n = len(traj)
    for k in range(n):
        try:
            if flow is None:
                flow = solve_stokes_cell(grid, cfg.nu)
            p, flow, _, _ = solve_cell_properties(grid, traj.v0[k], cfg.pe, cfg.nu, flow=flow)
            props.append(p)
            if keep_grids:
                grids.append(grid.copy())
            if k + 1 < n:
                dt = traj.times[k + 1] - traj.times[k]
                new = advance_interface(grid, float(traj.c0[k]), dt, cfg.kinetics, cfg.da, cfg.cfl)
                if not np.array_equal(new.phi, grid.phi):
                    flow = None
                grid = new
        except MultiscaleError as exc:
            raise TrajectoryError(f"cell trajectory failed at step {k}: {exc}", step=k) from exc
    series = PropsSeries.from_props(traj.times, props)
    return (series, grids) if keep_grids else series
