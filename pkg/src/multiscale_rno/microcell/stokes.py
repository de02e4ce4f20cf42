"""Periodic cell Stokes problems on a staggered (MAC) grid.

For each unit body force e^i the solver returns a periodic velocity u^i and
pressure q^i with

    -grad q + nu lap u + e^i = 0,   div u = 0   in the pore,
    u = 0                                       in the solid.

Layout: ``ux[i, j]`` sits at ``(i h, (j + 1/2) h)`` (the face between cells
``i - 1`` and ``i``), ``uy[i, j]`` at ``((i + 1/2) h, j h)`` and the pressure at
cell centres. A face is fluid when the level set interpolated to it is
negative. Fluid faces next to a solid face use a sharp Dirichlet wall placed
at the interpolated zero crossing; solid faces are removed from the system,
which is the zero-permeability limit of Brinkman penalization.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import DegenerateGeometryError, SolverError
from .geometry import CellGrid

PENALTY = 0.0  # solid faces are eliminated: the infinite-penalty limit
THETA_MIN = 1e-3
PRESSURE_REG = 1e-12
DEFAULT_TOL = 1e-8


@dataclass
class FlowSolution:
    """Cell velocities for the unit forcings e^1, e^2.

    ``ux[k]``, ``uy[k]`` are the face velocities for forcing direction ``k``,
    ``q[k]`` the cell-centred pressure. ``K`` is the Dirichlet-energy Gram
    matrix of the two solutions, ``flux`` the matrix of cell-integrated
    velocity components ``flux[i, j] = int u^i . e^j``.
    """

    ux: np.ndarray  # (2, N, N)
    uy: np.ndarray  # (2, N, N)
    q: np.ndarray  # (2, N, N)
    nu: float
    K: np.ndarray
    flux: np.ndarray
    fluid_x: np.ndarray
    fluid_y: np.ndarray
    residual: float
    penalty: float = PENALTY
    info: dict = field(default_factory=dict)

    @property
    def resolution(self) -> int:
        return self.ux.shape[-1]

    def cell_velocity(self, k: int):
        """Velocity of forcing ``k`` averaged to cell centres."""
        ux, uy = self.ux[k], self.uy[k]
        return 0.5 * (ux + np.roll(ux, -1, 0)), 0.5 * (uy + np.roll(uy, -1, 1))

    def divergence(self, k: int) -> np.ndarray:
        h = 1.0 / self.resolution
        ux, uy = self.ux[k], self.uy[k]
        return (np.roll(ux, -1, 0) - ux + np.roll(uy, -1, 1) - uy) / h

    def max_divergence(self) -> float:
        return max(float(np.max(np.abs(self.divergence(k)))) for k in range(2))


def _face_levels(phi):
    """Level set interpolated to x-faces and y-faces."""
    return 0.5 * (phi + np.roll(phi, 1, 0)), 0.5 * (phi + np.roll(phi, 1, 1))


class _VelocityOperator:
    """Scaled viscous operator h^2 A for one velocity component.

    Besides the sparse matrix it keeps the edge and wall lists needed to
    evaluate the Dirichlet energy as an explicit sum of squares.
    """

    def __init__(self, face_phi, nu):
        N = face_phi.shape[0]
        n = N * N
        idx = np.arange(n).reshape(N, N)
        fluid = face_phi < 0
        rows, cols, vals = [], [], []
        diag = np.zeros(n)
        edges_a, edges_b = [], []
        wall_idx, wall_w = [], []
        for axis in (0, 1):
            nb_phi = np.roll(face_phi, -1, axis)
            nb_idx = np.roll(idx, -1, axis)
            nb_fluid = np.roll(fluid, -1, axis)
            # fluid-fluid edges: symmetric off-diagonal coupling
            ff = fluid & nb_fluid
            a, b = idx[ff], nb_idx[ff]
            edges_a.append(a)
            edges_b.append(b)
            np.add.at(diag, a, nu)
            np.add.at(diag, b, nu)
            rows += [a, b]
            cols += [b, a]
            vals += [np.full(a.size, -nu), np.full(a.size, -nu)]
            # fluid-solid edges on either side: wall at the zero crossing
            for src, dst_phi in ((fluid & ~nb_fluid, nb_phi), (nb_fluid & ~fluid, None)):
                if dst_phi is not None:
                    pa, pb, where = face_phi[src], dst_phi[src], idx[src]
                else:
                    pa, pb, where = nb_phi[src], face_phi[src], nb_idx[src]
                theta = np.maximum(pa / (pa - pb), THETA_MIN)
                np.add.at(diag, where, nu / theta)
                wall_idx.append(where)
                wall_w.append(1.0 / theta)
        solid = ~fluid.ravel()
        diag[solid] = 1.0  # these rows are eliminated before the solve
        rows.append(np.arange(n))
        cols.append(np.arange(n))
        vals.append(diag)
        self.matrix = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )
        self.fluid = fluid
        self.edges = (np.concatenate(edges_a), np.concatenate(edges_b))
        self.walls = (np.concatenate(wall_idx), np.concatenate(wall_w))
        self.nu = nu

    def energy_features(self, u_flat):
        """Vector whose squared norm is h^2 times the Dirichlet energy / nu."""
        a, b = self.edges
        w_idx, w = self.walls
        return np.concatenate([u_flat[b] - u_flat[a], u_flat[w_idx] * np.sqrt(w)])


def _gradient_matrix(N, axis):
    """D = h G: (D p)_face = p_cell - p_prev_cell along ``axis``."""
    n = N * N
    idx = np.arange(n).reshape(N, N)
    prev = np.roll(idx, 1, axis).ravel()
    rows = np.concatenate([np.arange(n), np.arange(n)])
    cols = np.concatenate([idx.ravel(), prev])
    vals = np.concatenate([np.ones(n), -np.ones(n)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def solve_stokes_cell(grid: CellGrid, nu: float = 1.0, tol: float = DEFAULT_TOL,
                      max_refine: int = 20) -> FlowSolution:
    """Solve both periodic cell Stokes problems with one sparse factorization."""
    phi = grid.phi
    if not np.any(phi >= 0):
        raise DegenerateGeometryError("cell has no solid; periodic Stokes flow is not defined")
    if not np.any(phi < 0):
        raise DegenerateGeometryError("cell has no pore phase")
    N, h = grid.resolution, grid.h
    n = N * N
    phx, phy = _face_levels(phi)
    opx, opy = _VelocityOperator(phx, nu), _VelocityOperator(phy, nu)
    Dx, Dy = _gradient_matrix(N, 0), _gradient_matrix(N, 1)
    # unknowns [ux, uy, h p]; rows scaled by h^2 so entries are O(1).
    # Solid faces and cells without a fluid face are eliminated (u = 0 there).
    A = sp.block_diag([opx.matrix, opy.matrix])
    D = sp.vstack([Dx, Dy])
    M = sp.bmat([[A, D], [D.T, -PRESSURE_REG * sp.identity(n)]], format="csr")
    fluid = np.concatenate([opx.fluid.ravel(), opy.fluid.ravel()])
    wet = np.asarray(abs(D[fluid]).sum(axis=0)).ravel() > 0
    keep = np.flatnonzero(np.concatenate([fluid, wet]))
    if not np.any(fluid):
        # every face blocked: the flow is identically zero
        z = np.zeros((2, N, N))
        return FlowSolution(ux=z, uy=z.copy(), q=z.copy(), nu=nu, K=np.zeros((2, 2)),
                            flux=np.zeros((2, 2)), fluid_x=opx.fluid, fluid_y=opy.fluid,
                            residual=0.0)
    Mr = M[keep][:, keep].tocsc()

    rhs_full = np.zeros((3 * n, 2))
    rhs_full[:n, 0] = h**2 * opx.fluid.ravel()
    rhs_full[n:2 * n, 1] = h**2 * opy.fluid.ravel()
    rhs = rhs_full[keep]

    lu = spla.splu(Mr, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options={"SymmetricMode": True})
    xr = lu.solve(rhs)
    scale = np.linalg.norm(rhs, axis=0)
    res = np.max(np.linalg.norm(rhs - Mr @ xr, axis=0) / scale)
    it = 0
    while res > tol and it < max_refine:
        xr += lu.solve(rhs - Mr @ xr)
        res = np.max(np.linalg.norm(rhs - Mr @ xr, axis=0) / scale)
        it += 1
    if not np.isfinite(res) or res > tol:
        raise SolverError(f"cell Stokes solve did not converge (relative residual {res:.3e})", residual=res)
    x = np.zeros((3 * n, 2))
    x[keep] = xr

    ux = x[:n].T.reshape(2, N, N)
    uy = x[n:2 * n].T.reshape(2, N, N)
    q = x[2 * n:].T.reshape(2, N, N) / h

    feats = [np.concatenate([opx.energy_features(ux[k].ravel()), opy.energy_features(uy[k].ravel())])
             for k in range(2)]
    K = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            K[i, j] = nu * float(np.dot(feats[i], feats[j]))
    flux = np.array([[ux[k].sum() * h**2, uy[k].sum() * h**2] for k in range(2)])
    return FlowSolution(ux=ux, uy=uy, q=q, nu=nu, K=K, flux=flux, fluid_x=opx.fluid,
                        fluid_y=opy.fluid, residual=float(res),
                        info={"refinements": it})
