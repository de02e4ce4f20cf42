"""Coupled Darcy/transport/surrogate time stepping."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from ..errors import ConfigError, DataError, MultiscaleError, SchemaError
from ..io import atomic_write_text, write_props_csv, write_table_csv, write_vtk_structured_points
from ..rno.model import RNOModel
from ..types import OUTPUT_NAMES, PropsSeries, Trajectory
from .darcy import DarcyBC, regularize_permeability, solve_darcy, tag_flux
from .mesh import GeoMesh
from .scenario import ScenarioConfig
from .transport import TransportBC, TransportConfig, solve_transport, tag_solute_flux

log = logging.getLogger(__name__)

DIAG_HEADER = ("step", "t", "tau", "q_in", "q_out", "dJ", "cum_dJ", "deposited_mass",
               "lambda_deposit", "flux_balance", "violations", "out_of_range")
IDX = {name: i for i, name in enumerate(OUTPUT_NAMES)}


@dataclass
class GeoState:
    """Fields on the mesh plus one property vector and internal state per cell."""

    props: np.ndarray        # (n, 11) physical
    xi: np.ndarray           # (n, k)
    p: np.ndarray = None
    c: np.ndarray = None
    v0: np.ndarray = None
    darcy: object = None
    transport: object = None
    tau: float = 0.0
    t: float = 0.0
    step: int = 0
    out_of_range: int = 0

    def K(self):
        P = self.props
        K = np.stack([P[:, IDX["K11"]], P[:, IDX["K12"]], P[:, IDX["K12"]], P[:, IDX["K22"]]], axis=1)
        return regularize_permeability(K.reshape(-1, 2, 2))

    def transport_fields(self):
        P = self.props
        D = np.stack([P[:, IDX["D11"]], P[:, IDX["D12"]], P[:, IDX["D21"]], P[:, IDX["D22"]]], axis=1)
        return {"D": D.reshape(-1, 2, 2), "gamma": P[:, IDX["gamma"]],
                "lambda": np.clip(P[:, IDX["lambda"]], 0.0, 1.0),
                "vbar": P[:, [IDX["vbar1"], IDX["vbar2"]]]}

    @property
    def lam(self):
        return np.clip(self.props[:, IDX["lambda"]], 0.0, 1.0)

    def inputs(self):
        return np.column_stack([self.c, self.v0])


def load_record(path) -> "RunRecord":
    """Read ``record.json`` from a run directory (or the file itself)."""
    p = Path(path)
    p = p / "record.json" if p.is_dir() else p
    try:
        doc = json.loads(p.read_text())
    except FileNotFoundError as exc:
        raise DataError(f"no run record at {p}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{p}: malformed run record: {exc}") from exc
    for key in ("config", "monitors"):
        if key not in doc:
            raise SchemaError(f"{p}: run record missing field {key!r}")
    return RunRecord(config=doc["config"], monitors=doc["monitors"], error=doc.get("error"))


@dataclass
class RunRecord:
    config: dict
    diagnostics: list = field(default_factory=list)        # rows matching DIAG_HEADER
    monitors: dict = field(default_factory=dict)           # name -> {"cell", "times", "inputs", "props", "xi0"}
    snapshots: dict = field(default_factory=dict)          # step -> dict of (nx, ny) fields
    lambda0: np.ndarray = None
    lambda_final: np.ndarray = None
    wall_time: float = 0.0
    error: str | None = None

    def column(self, name):
        k = DIAG_HEADER.index(name)
        return np.array([r[k] for r in self.diagnostics])

    def monitor_trajectory(self, name) -> Trajectory:
        m = self.monitors[name]
        inp = np.asarray(m["inputs"])
        return Trajectory(np.asarray(m["times"]), np.clip(inp[:, 0], 0.0, 1.0), inp[:, 1:])

    def monitor_series(self, name) -> PropsSeries:
        m = self.monitors[name]
        return PropsSeries(np.asarray(m["times"]), np.asarray(m["props"]))


# --------------------------------------------------------------------------
# building blocks
# --------------------------------------------------------------------------

def update_properties(state: GeoState, v0, c, dt: float, model: RNOModel) -> GeoState:
    """Advance every cell's surrogate by one step with inputs (c, v0)."""
    inputs = np.column_stack([np.asarray(c, dtype=float), np.asarray(v0, dtype=float)])
    before = model.diagnostics["out_of_range_inputs"]
    props, xi = model.step_batch(inputs, state.xi, dt)
    state.out_of_range += model.diagnostics["out_of_range_inputs"] - before
    state.props, state.xi = props, xi
    return state


def compute_well_flux(mesh: GeoMesh, state: GeoState, inlet="inlet", outlet="outlet"):
    """(q_in, q_out, dJ): inflow through ``inlet``, outflow through ``outlet``
    and inlet-minus-outlet total solute flux."""
    q_in = -tag_flux(mesh, state.darcy.boundary_flux, inlet)
    q_out = tag_flux(mesh, state.darcy.boundary_flux, outlet)
    j_in = -tag_solute_flux(mesh, state.transport, inlet)
    j_out = tag_solute_flux(mesh, state.transport, outlet)
    return q_in, q_out, j_in - j_out


def calibrate_xi(model: RNOModel, k_factor: float, c_ref: float, bracket=None):
    """Initial internal state whose K11 output is ``k_factor`` times that of
    the reference state, at rest and at concentration ``c_ref``."""
    if model.k == 0:
        raise ConfigError("heterogeneity by initial state needs a model with k >= 1")
    if k_factor <= 0:
        raise ConfigError("k_factor must be positive")
    inp = np.array([[c_ref, 0.0, 0.0]])
    base = model.xi0.copy()

    def logk(s):
        xi = base.copy()
        xi[0] = s
        return np.log(max(model.initial_outputs(inp, xi[None])[0, IDX["K11"]], 1e-300))

    target = logk(base[0]) + np.log(k_factor)
    lo, hi = bracket if bracket else model.metadata.get("xi_range", [[-1.0, 1.0]])[0]
    span = max(hi - lo, 1e-3)
    grid = np.linspace(lo - 2 * span, hi + 2 * span, 201)
    vals = np.array([logk(s) - target for s in grid])
    sign = np.nonzero(np.diff(np.sign(vals)))[0]
    if sign.size == 0:
        raise ConfigError(f"no initial state reproduces a K contrast of {k_factor}")
    # nearest root to the reference state
    roots = [brentq(lambda s: logk(s) - target, grid[i], grid[i + 1], xtol=1e-12) for i in sign]
    s = min(roots, key=lambda r: abs(r - base[0]))
    xi = base.copy()
    xi[0] = s
    return xi


def initial_state(cfg: ScenarioConfig, mesh: GeoMesh, model: RNOModel) -> GeoState:
    n = mesh.n_cells
    xi = np.tile(model.xi0, (n, 1))
    c_ref = cfg.kinetics.get("c_eq", 0.5)
    for r in cfg.regions:
        val = np.asarray(r["xi0"], dtype=float) if "xi0" in r else calibrate_xi(model, r["k_factor"], c_ref)
        xi[mesh.regions[r["name"]].ravel()] = val.reshape(model.k)
    inputs = np.column_stack([np.full(n, c_ref), np.zeros((n, 2))])
    return GeoState(props=model.initial_outputs(inputs, xi), xi=xi,
                    c=np.full(n, c_ref), v0=np.zeros((n, 2)))


def _solve_fields(cfg, mesh, state, dbc, tbc, tcfg):
    state.darcy = solve_darcy(mesh, state.K(), cfg.nu, dbc, f=cfg.f)
    state.transport = solve_transport(mesh, state.transport_fields(), tbc, tcfg, darcy=state.darcy,
                                      c_prev=state.c, dt=cfg.geo_dt)
    state.p, state.v0, state.c = state.darcy.p, state.darcy.v0, state.transport.c


def _snapshot(mesh, state):
    shp = (mesh.nx, mesh.ny)
    P = state.props
    out = {"p": state.p.reshape(shp), "c": state.c.reshape(shp), "lambda": state.lam.reshape(shp)}
    for name in ("K11", "K12", "K22", "D11", "D22", "gamma"):
        out[name] = P[:, IDX[name]].reshape(shp)
    out["v1"], out["v2"] = state.v0[:, 0].reshape(shp), state.v0[:, 1].reshape(shp)
    return out


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------

def run_multiscale(cfg: ScenarioConfig, model: RNOModel, out_dir=None, progress=None) -> RunRecord:
    """Quasi-static loop: per step update the surrogate with the current
    (c, v0), then re-solve Darcy and steady transport with the new properties.

    Raises the underlying solver error annotated with the failing step; the
    record so far (including the last good snapshot) is attached as
    ``exc.record``.
    """
    t0 = time.perf_counter()
    mesh = cfg.build_mesh()
    inlet, outlet = cfg.inlet_outlet()
    dbc = DarcyBC.from_tags(mesh, cfg.pressures())
    tbc = TransportBC.from_tags(mesh, cfg.concentrations())
    tcfg = TransportConfig(pe=cfg.pe, da=cfg.da, kinetics=cfg.kinetics_obj(), symmetrize_d=cfg.symmetrize_d,
                           advection=cfg.advection, transient=cfg.transient)
    m_solid = tcfg.kinetics.m
    rec = RunRecord(config=cfg.to_dict())
    state = initial_state(cfg, mesh, model)
    xi_init = state.xi.copy()
    area = mesh.cell_area

    # consistent initial fields: props^0 = f(inputs^0, xi^0) where inputs^0
    # come from fields solved with the previous iterate of props^0
    steady = TransportConfig(**{**tcfg.__dict__, "transient": False})
    inputs0 = state.inputs()
    for _ in range(max(cfg.init_iterations, 1)):
        state.props = model.initial_outputs(inputs0, xi_init)
        state.darcy = solve_darcy(mesh, state.K(), cfg.nu, dbc, f=cfg.f)
        state.transport = solve_transport(mesh, state.transport_fields(), tbc, steady, darcy=state.darcy)
        state.p, state.v0, state.c = state.darcy.p, state.darcy.v0, state.transport.c
        inputs_used, inputs0 = inputs0, state.inputs()
    rec.lambda0 = state.lam.copy()

    X, Y = (a.ravel() for a in mesh.centres())
    cells = {m["name"]: mesh.locate(m["x"], m["y"]) for m in cfg.monitors}
    for name, ci in cells.items():
        rec.monitors[name] = {"cell": int(ci), "x": float(X[ci]), "y": float(Y[ci]), "times": [0.0],
                              "inputs": [inputs_used[ci].tolist()], "props": [state.props[ci].tolist()],
                              "xi0": xi_init[ci].tolist()}

    cum_dj = dep = 0.0
    out = Path(out_dir) if out_dir else None

    def diag_row():
        q_in, q_out, dj = compute_well_flux(mesh, state, inlet, outlet)
        lam_dep = m_solid * float(np.sum(rec.lambda0 - state.lam)) * area
        return [state.step, state.t, state.tau, q_in, q_out, dj, cum_dj, dep, lam_dep,
                state.darcy.balance, state.transport.violations, state.out_of_range]

    rec.diagnostics.append(diag_row())
    rec.snapshots[0] = _snapshot(mesh, state)
    try:
        for n in range(1, cfg.steps + 1):
            inputs = state.inputs().copy()
            update_properties(state, state.v0, state.c, cfg.cell_dt, model)
            state.step, state.tau, state.t = n, n * cfg.cell_dt, n * cfg.geo_dt
            _solve_fields(cfg, mesh, state, dbc, tbc, tcfg)
            q_in, q_out, dj = compute_well_flux(mesh, state, inlet, outlet)
            cum_dj += dj * cfg.geo_dt
            dep += float(state.transport.reaction.sum()) * cfg.geo_dt
            rec.diagnostics.append(diag_row())
            for name, ci in cells.items():
                mon = rec.monitors[name]
                mon["times"].append(state.tau)
                mon["inputs"].append(inputs[ci].tolist())
                mon["props"].append(state.props[ci].tolist())
            if n % max(cfg.snapshot_every, 1) == 0 or n == cfg.steps:
                rec.snapshots[n] = _snapshot(mesh, state)
            if progress:
                progress(n)
    except MultiscaleError as exc:
        exc.step = state.step
        rec.error = f"step {state.step}: {exc}"
        rec.wall_time = time.perf_counter() - t0
        exc.record = rec
        if out:
            write_run(rec, mesh, out)
        raise
    rec.lambda_final = state.lam.copy()
    rec.wall_time = time.perf_counter() - t0
    if out:
        write_run(rec, mesh, out)
    return rec


def write_run(rec: RunRecord, mesh: GeoMesh, out_dir):
    """Diagnostics CSV, monitor histories, VTK snapshots and ``record.json``
    (config plus monitor histories, enough for a later replay)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"config": rec.config, "monitors": rec.monitors, "error": rec.error}
    atomic_write_text(out / "record.json", json.dumps(doc, sort_keys=True) + "\n")
    write_table_csv(out / "diagnostics.csv", DIAG_HEADER, rec.diagnostics)
    for name in rec.monitors:
        write_props_csv(out / f"monitor_{name}.csv", rec.monitor_series(name))
        tr = rec.monitor_trajectory(name)
        write_table_csv(out / f"monitor_{name}_inputs.csv", ("t", "c0", "v1", "v2"),
                        np.column_stack([tr.times, tr.inputs]))
    for step, fields in sorted(rec.snapshots.items()):
        write_vtk_structured_points(out / f"fields_{step:05d}.vtk", fields, (mesh.dx, mesh.dy),
                                    title=f"{rec.config.get('name', 'run')} step {step}")
