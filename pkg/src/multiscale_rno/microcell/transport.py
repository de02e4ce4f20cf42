"""Pore velocity, drift velocity, the corrector (chi) problems and the
effective coefficients of the homogenized transport equation.

All pore integrals use the same quadrature: cell ``P`` contributes
``alpha_P h^2`` where ``alpha = H(-phi)`` is the smoothed pore indicator. The
face between two cells is wetted over a fraction ``min(alpha_P, alpha_Q)``.
Using one quadrature everywhere makes the chi problems exactly compatible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from ..errors import CompatibilityError, GeometryError, SolverError
from ..types import EffectiveProps
from .geometry import CellGrid
from .stokes import FlowSolution

CLOG_THRESHOLD = 1e-8
COMPAT_TOL = 1e-8


@dataclass
class PoreVelocity:
    """Cell-scale velocity v = sum_i w_i u^i on faces and at cell centres."""

    fx: np.ndarray  # x-face values (N, N)
    fy: np.ndarray  # y-face values (N, N)
    cx: np.ndarray  # cell-centre x component
    cy: np.ndarray
    weights: np.ndarray
    clogged: tuple = (False, False)

    @property
    def all_clogged(self) -> bool:
        return all(self.clogged)

    @classmethod
    def zero(cls, N, clogged=(False, False)):
        z = np.zeros((N, N))
        return cls(z, z.copy(), z.copy(), z.copy(), np.zeros(2), tuple(clogged))


@dataclass
class ChiSolution:
    chi: np.ndarray  # (2, N, N), zero outside the active pore cells
    vstar: np.ndarray
    active: np.ndarray
    n_components: int
    residual: float
    compat_residual: np.ndarray


def _pore_integral(grid: CellGrid, f) -> float:
    return float(np.sum(grid.pore_weights() * f) * grid.h**2)


def clogged_directions(flow: FlowSolution, threshold: float = CLOG_THRESHOLD):
    return tuple(bool(flow.K[i, i] < threshold) for i in range(2))


def compute_pore_velocity(grid: CellGrid, flow: FlowSolution, v0) -> PoreVelocity:
    """Superpose the unit-forcing solutions so the pore average equals ``v0``.

    Directions whose permeability is below the clogging threshold are left out
    and the weights come from a pseudo-inverse of the remaining columns.
    """
    v0 = np.asarray(v0, dtype=float)
    N = grid.resolution
    clogged = clogged_directions(flow)
    if not np.any(v0) or all(clogged):
        return PoreVelocity.zero(N, clogged)
    alpha = grid.pore_weights()
    lam = float(alpha.sum() * grid.h**2)
    cells = [flow.cell_velocity(k) for k in range(2)]
    M = np.empty((2, 2))
    for i in range(2):
        for k in range(2):
            M[k, i] = np.sum(alpha * cells[i][k]) * grid.h**2 / lam
    open_dirs = [i for i in range(2) if not clogged[i]]
    w = np.zeros(2)
    w[open_dirs] = np.linalg.pinv(M[:, open_dirs]) @ v0
    fx = w[0] * flow.ux[0] + w[1] * flow.ux[1]
    fy = w[0] * flow.uy[0] + w[1] * flow.uy[1]
    cx = w[0] * cells[0][0] + w[1] * cells[1][0]
    cy = w[0] * cells[0][1] + w[1] * cells[1][1]
    return PoreVelocity(fx, fy, cx, cy, w, clogged)


def compute_drift_velocity(grid: CellGrid, v, pe: float) -> np.ndarray:
    """v* = (pe / lambda) * pore integral of v.

    ``v`` is a PoreVelocity or a pair of cell-centred component arrays.
    """
    cx, cy = (v.cx, v.cy) if isinstance(v, PoreVelocity) else v
    lam = _pore_integral(grid, 1.0)
    if lam <= 0.0:
        raise GeometryError("drift velocity undefined for an empty pore phase")
    return pe * np.array([_pore_integral(grid, cx), _pore_integral(grid, cy)]) / lam


class _ChiOperator:
    """Upwind advection plus weighted diffusion on the active pore cells."""

    def __init__(self, grid: CellGrid, v: PoreVelocity, pe: float):
        N, h = grid.resolution, grid.h
        n = N * N
        alpha = grid.pore_weights()
        idx = np.arange(n).reshape(N, N)
        self.alpha = alpha
        # face data for the faces on the low side of each cell along each axis
        self.face_w = []
        self.face_F = []
        rows, cols, vals = [], [], []
        adj_r, adj_c = [], []
        for axis, face_v in ((0, v.fx), (1, v.fy)):
            prev = np.roll(idx, 1, axis)
            a_prev = np.roll(alpha, 1, axis)
            w = np.minimum(alpha, a_prev)
            F = pe * face_v * h  # flux from prev into this cell
            self.face_w.append(w)
            self.face_F.append(F)
            P, Q = idx.ravel(), prev.ravel()
            wf, Ff = w.ravel(), F.ravel()
            # diffusion: w * (chi_P - chi_Q) in row P and the mirror in row Q
            rows += [P, P, Q, Q]
            cols += [P, Q, Q, P]
            vals += [wf, -wf, wf, -wf]
            # advection: outflow from Q through the face equals Ff when Ff > 0
            up = np.where(Ff > 0, Q, P)
            rows += [Q, P]
            cols += [up, up]
            vals += [Ff, -Ff]
            link = (wf > 0) | (Ff != 0)
            adj_r.append(P[link])
            adj_c.append(Q[link])
        L = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n))
        touched = np.zeros(n, dtype=bool)
        for r, c in zip(adj_r, adj_c):
            touched[r] = True
            touched[c] = True
        active = (alpha.ravel() > 0) | touched
        self.active = active.reshape(N, N)
        act_idx = np.flatnonzero(active)
        self.act_idx = act_idx
        self.L = L[act_idx][:, act_idx]
        # connected components of the active cells (periodic by construction)
        r, c = np.concatenate(adj_r), np.concatenate(adj_c)
        G = sp.csr_matrix((np.ones(r.size), (r, c)), shape=(n, n))
        G = G[act_idx][:, act_idx]
        self.n_comp, self.labels = connected_components(G, directed=False)


def solve_chi_cell(grid: CellGrid, v: PoreVelocity, vstar, pe: float,
                   tol: float = 1e-10) -> ChiSolution:
    """Solve both corrector problems with one factorization.

    Each connected pore component gets a Lagrange multiplier enforcing zero
    pore mean of chi there; the bordered system is nonsingular whenever the
    right-hand side is compatible.
    """
    vstar = np.asarray(vstar, dtype=float)
    N, h = grid.resolution, grid.h
    op = _ChiOperator(grid, v, pe)
    alpha = op.alpha.ravel()[op.act_idx]
    m = op.act_idx.size
    vc = [v.cx.ravel()[op.act_idx], v.cy.ravel()[op.act_idx]]

    rhs = np.zeros((m, 2))
    for j in range(2):
        src = alpha * h**2 * (vstar[j] - pe * vc[j])
        # interface source: wetted faces along axis j, outward normal +-e_j
        w = op.face_w[j]
        face = np.zeros(N * N)
        idx = np.arange(N * N).reshape(N, N)
        prev = np.roll(idx, 1, j).ravel()
        # cell P sees this face with normal -e_j, cell prev with +e_j
        np.add.at(face, idx.ravel(), -w.ravel() * h)
        np.add.at(face, prev, w.ravel() * h)
        rhs[:, j] = src + face[op.act_idx]

    # compatibility per component: the right-hand side must integrate to zero
    B = sp.csr_matrix((alpha * h**2, (np.arange(m), op.labels)), shape=(m, op.n_comp))
    comp_sum = np.abs(B.T.astype(bool).astype(float) @ rhs)
    compat = comp_sum.max(axis=0) if comp_sum.size else np.zeros(2)
    scale = max(1.0, pe * float(np.max(np.abs(vstar))) if vstar.size else 1.0)
    if np.any(compat > COMPAT_TOL * scale):
        j = int(np.argmax(compat))
        raise CompatibilityError(
            f"chi problem for component {j + 1} is incompatible (residual {compat[j]:.3e})",
            residual=float(compat[j]))

    # components with zero pore weight (advection-only cells) are pinned by a
    # unit multiplier column instead
    colw = np.asarray(B.sum(axis=0)).ravel()
    zero_comp = np.flatnonzero(colw == 0)
    if zero_comp.size:
        pin = sp.csr_matrix((np.ones(m), (np.arange(m), op.labels)), shape=(m, op.n_comp))
        B = B.tolil()
        for c in zero_comp:
            B[:, c] = pin[:, c]
        B = B.tocsr()
    S = sp.bmat([[op.L, B], [B.T, None]], format="csc")
    b = np.vstack([rhs, np.zeros((op.n_comp, 2))])
    lu = spla.splu(S)
    x = lu.solve(b)
    bnorm = np.maximum(np.linalg.norm(b, axis=0), 1e-300)
    res = float(np.max(np.linalg.norm(b - S @ x, axis=0) / bnorm))
    for _ in range(3):
        if res <= tol:
            break
        x += lu.solve(b - S @ x)
        res = float(np.max(np.linalg.norm(b - S @ x, axis=0) / bnorm))
    if not np.isfinite(res) or res > 1e3 * tol:
        raise SolverError(f"chi solve did not converge (relative residual {res:.3e})", residual=res)

    chi = np.zeros((2, N * N))
    chi[:, op.act_idx] = x[:m].T
    # remove roundoff in the normalization so the pore mean is zero
    for c in range(op.n_comp):
        sel = op.labels == c
        wsum = np.sum(alpha[sel])
        if wsum > 0:
            for j in range(2):
                vals = chi[j, op.act_idx[sel]]
                chi[j, op.act_idx[sel]] = vals - np.sum(alpha[sel] * vals) / wsum
    sol = ChiSolution(chi=chi.reshape(2, N, N), vstar=vstar, active=op.active,
                      n_components=op.n_comp, residual=res, compat_residual=compat)
    sol._op = op
    return sol


def compute_effective_properties(grid: CellGrid, flow: FlowSolution, v: PoreVelocity,
                                 chi: ChiSolution, pe: float) -> EffectiveProps:
    """Assemble K*, D*, v-bar, gamma and lambda from solved cell problems."""
    h = grid.h
    alpha = grid.pore_weights()
    lam = float(alpha.sum() * h**2)
    vbar = np.array([np.sum(alpha * v.cx), np.sum(alpha * v.cy)]) * h**2 / lam
    op = getattr(chi, "_op", None) or _ChiOperator(grid, v, pe)
    D = np.zeros((2, 2))
    vc = (v.cx, v.cy)
    for i in range(2):
        w = op.face_w[i]
        Wi = float(np.sum(w) * h**2)
        for j in range(2):
            c = chi.chi[j]
            grad_term = float(np.sum(w * (c - np.roll(c, 1, i))) * h)
            adv_term = pe * float(np.sum(alpha * (vbar[i] - vc[i]) * c) * h**2)
            D[i, j] = (Wi if i == j else 0.0) + adv_term + grad_term
    return EffectiveProps(K=flow.K.copy(), D=D, vbar=vbar, gamma=grid.perimeter, lam=lam,
                          clogged=clogged_directions(flow))


def solve_cell_properties(grid: CellGrid, v0, pe: float, nu: float = 1.0, flow=None):
    """Full cell pipeline at one instant; returns (props, flow, velocity, chi)."""
    from .stokes import solve_stokes_cell

    if flow is None:
        flow = solve_stokes_cell(grid, nu)
    v = compute_pore_velocity(grid, flow, v0)
    vstar = compute_drift_velocity(grid, v, pe)
    chi = solve_chi_cell(grid, v, vstar, pe)
    return compute_effective_properties(grid, flow, v, chi, pe), flow, v, chi
