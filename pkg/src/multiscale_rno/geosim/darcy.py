"""Darcy pressure solve on a GeoMesh."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import ConfigError, SolverError
from .fv import DiffusionOperator
from .mesh import SIDES, GeoMesh

K_FLOOR = 1e-12


@dataclass
class DarcyBC:
    """Dirichlet pressure per side: boolean facet masks and full-length values."""

    mask: dict
    value: dict

    @classmethod
    def from_tags(cls, mesh: GeoMesh, pressures: dict):
        mask, value = {}, {}
        for side in SIDES:
            tags = mesh.tags[side]
            m = np.zeros(len(tags), bool)
            v = np.zeros(len(tags))
            for tag, p in pressures.items():
                sel = tags == tag
                m |= sel
                v[sel] = p
            mask[side], value[side] = m, v
        return cls(mask, value)

    def n_dirichlet(self):
        return int(sum(m.sum() for m in self.mask.values()))


@dataclass
class DarcySolution:
    p: np.ndarray          # (n,) cell pressures
    v0: np.ndarray         # (n, 2) cell-centred Darcy velocity
    face_flux: np.ndarray  # interior face fluxes (volume per time, P -> Q)
    boundary_flux: dict    # side -> outward facet fluxes
    balance: float         # |net boundary flux| / gross boundary flux


def regularize_permeability(K):
    """Floor the diagonal and keep each 2x2 tensor positive semidefinite."""
    K = np.array(K, dtype=float).reshape(-1, 2, 2)
    k11 = np.maximum(K[:, 0, 0], K_FLOOR)
    k22 = np.maximum(K[:, 1, 1], K_FLOOR)
    lim = np.sqrt(k11 * k22)
    k12 = np.clip(0.5 * (K[:, 0, 1] + K[:, 1, 0]), -lim, lim)
    out = np.empty_like(K)
    out[:, 0, 0], out[:, 1, 1] = k11, k22
    out[:, 0, 1] = out[:, 1, 0] = k12
    return out


def solve_darcy(mesh: GeoMesh, K, nu: float, bc: DarcyBC, f=(0.0, 0.0), source=None) -> DarcySolution:
    """Solve -div((1/nu) K (f - grad p)) = source with Dirichlet facets in ``bc``.

    ``K`` is (n, 2, 2) per cell. ``source`` (optional, per unit area) is for
    verification problems.
    """
    if nu <= 0:
        raise ConfigError("viscosity must be positive")
    if bc.n_dirichlet() == 0:
        raise ConfigError("Darcy problem needs at least one Dirichlet pressure facet")
    K = regularize_permeability(K)
    if np.all(K[:, 0, 0] <= K_FLOOR) and np.all(K[:, 1, 1] <= K_FLOOR):
        raise SolverError("permeability field is clogged everywhere; Darcy system is singular")
    T = K / nu
    op = DiffusionOperator(mesh, T, bc.mask)
    rhs = op.boundary_rhs(bc.value)
    f = np.asarray(f, dtype=float)
    body = None
    if np.any(f != 0):
        body = _body_force_fluxes(mesh, op, T, f, bc)
        rhs -= body["div"]
    if source is not None:
        rhs += np.asarray(source, dtype=float).ravel() * mesh.cell_area
    try:
        p = spla.spsolve(sp.csc_matrix(op.A), rhs)
    except RuntimeError as exc:
        raise SolverError(f"Darcy solve failed: {exc}") from exc
    if not np.all(np.isfinite(p)):
        raise SolverError("Darcy solve produced non-finite pressure")
    face = op.face_fluxes(p)
    bflux = op.boundary_fluxes(p, bc.value)
    if body is not None:
        face = face + body["face"]
        for side in SIDES:
            bflux[side] = bflux[side] + body["bnd"][side]
    v0 = cell_velocity(mesh, face, bflux)
    net = sum(b.sum() for b in bflux.values())
    gross = sum(np.abs(b).sum() for b in bflux.values())
    if source is not None:
        net -= float(np.sum(source) * mesh.cell_area)
    return DarcySolution(p, v0, face, bflux, abs(net) / gross if gross > 0 else 0.0)


def _body_force_fluxes(mesh, op, T, f, bc):
    """Fluxes of T f through interior faces and Dirichlet facets."""
    fc = op.faces
    tf = np.einsum("nij,j->ni", T, f)
    face = np.where(fc.axis == 0, 0.5 * (tf[fc.P, 0] + tf[fc.Q, 0]), 0.5 * (tf[fc.P, 1] + tf[fc.Q, 1])) * fc.area
    div = np.zeros(mesh.n_cells)
    np.add.at(div, fc.P, face)
    np.add.at(div, fc.Q, -face)
    bnd = {}
    sign = {"left": -1.0, "right": 1.0, "bottom": -1.0, "top": 1.0}
    for side in SIDES:
        cells = mesh.facet_cells(side)
        comp = 0 if side in ("left", "right") else 1
        arr = np.where(bc.mask[side], sign[side] * tf[cells, comp] * mesh.facet_area(side), 0.0)
        np.add.at(div, cells, arr)
        bnd[side] = arr
    return {"face": face, "div": div, "bnd": bnd}


def cell_velocity(mesh: GeoMesh, face_flux, boundary_flux: dict):
    """Cell-centre velocity from the average of opposite face velocities."""
    nx, ny = mesh.nx, mesh.ny
    nfx = (nx - 1) * ny
    fx = np.zeros((nx + 1, ny))
    fy = np.zeros((nx, ny + 1))
    fx[1:-1, :] = face_flux[:nfx].reshape(nx - 1, ny)
    fy[:, 1:-1] = face_flux[nfx:].reshape(nx, ny - 1)
    fx[0, :] = -boundary_flux["left"]
    fx[-1, :] = boundary_flux["right"]
    fy[:, 0] = -boundary_flux["bottom"]
    fy[:, -1] = boundary_flux["top"]
    vx = 0.5 * (fx[:-1] + fx[1:]) / mesh.dy
    vy = 0.5 * (fy[:, :-1] + fy[:, 1:]) / mesh.dx
    return np.column_stack([vx.ravel(), vy.ravel()])


def tag_flux(mesh: GeoMesh, boundary_flux: dict, tag: str) -> float:
    """Total outward flux through facets carrying ``tag``."""
    return float(sum(boundary_flux[s][mesh.tags[s] == tag].sum() for s in SIDES))
