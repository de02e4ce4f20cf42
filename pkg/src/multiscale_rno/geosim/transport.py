"""Steady advection-diffusion-reaction of the macroscopic concentration."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import ConfigError, SolverError
from ..microcell.evolve import Kinetics
from .fv import DiffusionOperator, interior_faces
from .mesh import SIDES, GeoMesh

D_FLOOR = 1e-12
BOUND_TOL = 1e-9


@dataclass
class TransportConfig:
    pe: float = 1000.0
    da: float = 0.001
    kinetics: Kinetics = field(default_factory=Kinetics)
    symmetrize_d: bool = False
    advection: str = "darcy"    # "darcy": Darcy face fluxes, "props": lambda * vbar
    transient: bool = False
    newton_tol: float = 1e-10
    newton_max: int = 30

    def __post_init__(self):
        if self.pe <= 0 or self.da <= 0:
            raise ConfigError("Pe and Da must be positive")
        if self.advection not in ("darcy", "props"):
            raise ConfigError(f"unknown advection mode {self.advection!r}")


@dataclass
class TransportBC:
    mask: dict
    value: dict

    @classmethod
    def from_tags(cls, mesh: GeoMesh, concentrations: dict):
        mask, value = {}, {}
        for side in SIDES:
            tags = mesh.tags[side]
            m = np.zeros(len(tags), bool)
            v = np.zeros(len(tags))
            for tag, c in concentrations.items():
                sel = tags == tag
                m |= sel
                v[sel] = c
            mask[side], value[side] = m, v
        return cls(mask, value)

    def bounds(self):
        vals = np.concatenate([self.value[s][self.mask[s]] for s in SIDES])
        return float(vals.min()), float(vals.max())


@dataclass
class TransportSolution:
    c: np.ndarray              # limited concentration
    c_raw: np.ndarray          # solution before limiting
    boundary_flux: dict        # side -> outward solute flux per facet (from c_raw)
    reaction: np.ndarray       # per-cell gamma * Da * q(c_raw) * area
    violations: int            # cells outside the admissible band before limiting
    residuals: list


def _props_fluxes(mesh, lam_vbar):
    """Face and boundary fluxes of lambda * vbar (cell values averaged to faces)."""
    f = interior_faces(mesh)
    comp = f.axis
    face = 0.5 * (lam_vbar[f.P, comp] + lam_vbar[f.Q, comp]) * f.area
    bnd = {}
    sign = {"left": -1.0, "right": 1.0, "bottom": -1.0, "top": 1.0}
    for side in SIDES:
        cells = mesh.facet_cells(side)
        k = 0 if side in ("left", "right") else 1
        bnd[side] = sign[side] * lam_vbar[cells, k] * mesh.facet_area(side)
    return face, bnd


def solve_transport(mesh: GeoMesh, fields: dict, bc: TransportBC, cfg: TransportConfig,
                    darcy=None, c_prev=None, dt=None) -> TransportSolution:
    """Solve Pe div(u c) - div(D grad c) + gamma Da q(c) = 0 (steady by default).

    ``fields`` holds per-cell "D" (n, 2, 2), "gamma" (n,), "lambda" (n,) and,
    for ``advection="props"``, "vbar" (n, 2). With ``advection="darcy"`` the
    carrier is the Darcy flux of ``darcy``. Advection is first-order upwind.
    Walls carry no flux; facets in ``bc`` take Dirichlet concentrations.
    """
    n = mesh.n_cells
    D = np.array(fields["D"], dtype=float).reshape(n, 2, 2)
    if cfg.symmetrize_d:
        D = 0.5 * (D + D.transpose(0, 2, 1))
    D[:, 0, 0] = np.maximum(D[:, 0, 0], D_FLOOR)
    D[:, 1, 1] = np.maximum(D[:, 1, 1], D_FLOOR)
    gamma = np.maximum(np.asarray(fields["gamma"], dtype=float).ravel(), 0.0)
    lam = np.clip(np.asarray(fields["lambda"], dtype=float).ravel(), 0.0, 1.0)

    diff = DiffusionOperator(mesh, D, bc.mask)
    if cfg.advection == "darcy":
        if darcy is None:
            raise ConfigError("darcy advection needs a Darcy solution")
        face, bflux = darcy.face_flux, darcy.boundary_flux
    else:
        face, bflux = _props_fluxes(mesh, lam[:, None] * np.asarray(fields["vbar"], dtype=float))
    face = cfg.pe * face
    bflux = {s: cfg.pe * bflux[s] for s in SIDES}

    # upwind advection on interior faces
    f = diff.faces
    up = np.where(face >= 0, f.P, f.Q)
    m = face.size
    rows = np.arange(m)
    U = sp.csr_matrix((face, (rows, up)), shape=(m, n))
    SP = sp.csr_matrix((np.ones(m), (rows, f.P)), shape=(m, n))
    SQ = sp.csr_matrix((np.ones(m), (rows, f.Q)), shape=(m, n))
    A = diff.A + (SP - SQ).T @ U
    rhs = diff.boundary_rhs(bc.value)
    # boundary advection: outflow uses the cell value; inflow needs a Dirichlet value
    out_diag = np.zeros(n)
    for side in SIDES:
        cells = mesh.facet_cells(side)
        F = bflux[side]
        outflow = F > 0
        np.add.at(out_diag, cells[outflow], F[outflow])
        inflow = (F < 0) & bc.mask[side]
        np.add.at(rhs, cells[inflow], -F[inflow] * bc.value[side][inflow])
    A = (A + sp.diags(out_diag)).tocsr()

    area = mesh.cell_area
    kin = cfg.kinetics
    if cfg.transient:
        if c_prev is None or dt is None or dt <= 0:
            raise ConfigError("transient transport needs c_prev and a positive dt")
        A = (A + sp.diags(lam * area / dt)).tocsr()
        rhs = rhs + lam * area / dt * np.asarray(c_prev, dtype=float)

    react = gamma * cfg.da * area
    c = np.full(n, 0.5 * sum(bc.bounds())) if c_prev is None else np.array(c_prev, dtype=float)
    residuals = []
    for it in range(cfg.newton_max):
        qc = kin.q(c)
        Ac = A @ c
        R = Ac - rhs + react * qc
        scale = float(np.linalg.norm(rhs) + np.linalg.norm(Ac)) + 1e-300
        res = float(np.linalg.norm(R)) / scale
        residuals.append(res)
        if res < cfg.newton_tol and it > 0:
            break
        J = (A + sp.diags(react * kin.dq(c))).tocsc()
        try:
            c = c - spla.spsolve(J, R)
        except RuntimeError as exc:
            raise SolverError(f"transport solve failed: {exc}", residual=res, step=it) from exc
    else:
        raise SolverError(f"reaction iteration did not converge; residuals {residuals}",
                          residual=residuals[-1], step=len(residuals))
    if not np.all(np.isfinite(c)):
        raise SolverError("transport solve produced non-finite concentration")

    # outward solute fluxes through Dirichlet facets
    dflux = diff.boundary_fluxes(c, bc.value)
    out = {}
    for side in SIDES:
        cells = mesh.facet_cells(side)
        F = bflux[side]
        cb = np.where(F > 0, c[cells], bc.value[side])
        adv = np.where((F > 0) | bc.mask[side], F * cb, 0.0)
        out[side] = adv + dflux[side]

    lo, hi = bc.bounds()
    lo, hi = min(lo, kin.c_eq), max(hi, kin.c_eq)
    violations = int(np.sum((c < lo - BOUND_TOL) | (c > hi + BOUND_TOL)))
    return TransportSolution(np.clip(c, 0.0, 1.0), c, out, react * kin.q(c), violations, residuals)


def tag_solute_flux(mesh: GeoMesh, sol: TransportSolution, tag: str) -> float:
    return float(sum(sol.boundary_flux[s][mesh.tags[s] == tag].sum() for s in SIDES))
