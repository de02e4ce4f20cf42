"""Cell-centred finite-volume building blocks on a GeoMesh.

Fluxes are two-point on the normal component (harmonic face average) plus
a cross-derivative term for off-diagonal tensor entries, using the average
of the adjacent cells' tangential gradients. Every face flux is shared by
the two cells, so the schemes are exactly conservative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import SIDES, GeoMesh


def _harmonic(a, b):
    s = a + b
    return np.where(s > 0, 2 * a * b / np.where(s > 0, s, 1.0), 0.0)


def cell_gradients(mesh: GeoMesh):
    """Sparse operators for d/dx and d/dy at cell centres (one-sided at edges)."""
    n = mesh.n_cells
    idx = np.arange(n).reshape(mesh.nx, mesh.ny)
    ops = []
    for axis, h, m in ((0, mesh.dx, mesh.nx), (1, mesh.dy, mesh.ny)):
        rows, cols, vals = [], [], []
        for k in range(m):
            sl = [slice(None), slice(None)]
            sl[axis] = k
            P = idx[tuple(sl)].ravel()
            lo, hi = max(k - 1, 0), min(k + 1, m - 1)
            if hi == lo:
                continue
            sl[axis] = lo
            L = idx[tuple(sl)].ravel()
            sl[axis] = hi
            H = idx[tuple(sl)].ravel()
            d = (hi - lo) * h
            rows += [P, P]
            cols += [H, L]
            vals += [np.full(P.size, 1 / d), np.full(P.size, -1 / d)]
        if rows:
            ops.append(sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                     shape=(n, n)))
        else:
            ops.append(sp.csr_matrix((n, n)))
    return ops


@dataclass
class Faces:
    """Interior faces: ``P`` -> ``Q`` along ``axis`` (Q is the +axis neighbour)."""

    P: np.ndarray
    Q: np.ndarray
    axis: np.ndarray
    area: np.ndarray
    dist: np.ndarray


def interior_faces(mesh: GeoMesh) -> Faces:
    idx = np.arange(mesh.n_cells).reshape(mesh.nx, mesh.ny)
    Px, Qx = idx[:-1, :].ravel(), idx[1:, :].ravel()
    Py, Qy = idx[:, :-1].ravel(), idx[:, 1:].ravel()
    return Faces(
        P=np.concatenate([Px, Py]),
        Q=np.concatenate([Qx, Qy]),
        axis=np.concatenate([np.zeros(Px.size, int), np.ones(Py.size, int)]),
        area=np.concatenate([np.full(Px.size, mesh.dy), np.full(Py.size, mesh.dx)]),
        dist=np.concatenate([np.full(Px.size, mesh.dx), np.full(Py.size, mesh.dy)]),
    )


class DiffusionOperator:
    """Discrete -div(T grad u) with Dirichlet facets and zero flux elsewhere.

    ``T`` is a per-cell tensor field of shape (n, 2, 2). ``dirichlet`` maps a
    side name to a boolean facet mask; values are supplied at solve time.
    """

    def __init__(self, mesh: GeoMesh, T, dirichlet: dict):
        self.mesh = mesh
        n = mesh.n_cells
        T = np.asarray(T, dtype=float).reshape(n, 2, 2)
        f = interior_faces(mesh)
        self.faces = f
        Gx, Gy = cell_gradients(mesh)
        ax = f.axis
        tn_P = np.where(ax == 0, T[f.P, 0, 0], T[f.P, 1, 1])
        tn_Q = np.where(ax == 0, T[f.Q, 0, 0], T[f.Q, 1, 1])
        tnn = _harmonic(tn_P, tn_Q)
        # off-diagonal entry multiplying the tangential gradient
        tt = np.where(ax == 0, 0.5 * (T[f.P, 0, 1] + T[f.Q, 0, 1]), 0.5 * (T[f.P, 1, 0] + T[f.Q, 1, 0]))
        m = f.P.size
        rows = np.arange(m)
        SP = sp.csr_matrix((np.ones(m), (rows, f.P)), shape=(m, n))
        SQ = sp.csr_matrix((np.ones(m), (rows, f.Q)), shape=(m, n))
        Gt_x = 0.5 * (SP + SQ) @ Gy  # tangential derivative for x-faces
        Gt_y = 0.5 * (SP + SQ) @ Gx
        Gt = sp.diags((ax == 0).astype(float)) @ Gt_x + sp.diags((ax == 1).astype(float)) @ Gt_y
        # face flux (P -> Q) = F_op @ u
        self.F_op = -sp.diags(f.area) @ (sp.diags(tnn / f.dist) @ (SQ - SP) + sp.diags(tt) @ Gt)
        D = (SP - SQ).T  # cell P gains +flux (outflow), cell Q gains -flux
        A = (D @ self.F_op).tolil()
        self.bnd = {}
        diag_add = np.zeros(n)
        for side in SIDES:
            mask = np.asarray(dirichlet.get(side, np.zeros(mesh.side_count(side), bool)), bool)
            if not np.any(mask):
                continue
            cells = mesh.facet_cells(side)[mask]
            tcomp = T[cells, 0, 0] if side in ("left", "right") else T[cells, 1, 1]
            coef = tcomp * mesh.facet_area(side) / (0.5 * mesh.normal_spacing(side))
            np.add.at(diag_add, cells, coef)
            self.bnd[side] = (mask, cells, coef)
        self.A = (A + sp.diags(diag_add)).tocsr()

    def boundary_rhs(self, values: dict):
        """Right-hand side from Dirichlet values (side -> full-length array)."""
        rhs = np.zeros(self.mesh.n_cells)
        for side, (mask, cells, coef) in self.bnd.items():
            np.add.at(rhs, cells, coef * np.asarray(values[side])[mask])
        return rhs

    def face_fluxes(self, u):
        return self.F_op @ u

    def boundary_fluxes(self, u, values: dict):
        """Outward flux through each Dirichlet facet: side -> array (0 on others)."""
        out = {}
        for side in SIDES:
            arr = np.zeros(self.mesh.side_count(side))
            if side in self.bnd:
                mask, cells, coef = self.bnd[side]
                arr[mask] = coef * (u[cells] - np.asarray(values[side])[mask])
            out[side] = arr
        return out
