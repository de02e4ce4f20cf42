"""Reaction kinetics and uniform-speed motion of the pore/solid interface."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import CFLError, ConfigError
from .geometry import CellGrid, reinitialize


@dataclass
class Kinetics:
    """Reaction rate q_c(c); positive above equilibrium (deposition).

    By default ``q_c(c) = k_r (c - c_eq)``. A custom ``rate`` callable replaces
    the linear law and must vanish at ``c_eq``.
    """

    c_eq: float = 0.5
    k_r: float = 1.0
    m: float = 1.0
    rate: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.m <= 0:
            raise ConfigError("solid concentration m must be positive")
        if self.rate is not None and abs(float(self.rate(self.c_eq))) > 1e-12:
            raise ConfigError("reaction rate must vanish at c_eq")

    def q(self, c):
        if self.rate is not None:
            return self.rate(c)
        return self.k_r * (np.asarray(c, dtype=float) - self.c_eq)

    def dq(self, c, eps=1e-7):
        """Derivative of the rate, used to linearize the macroscale reaction."""
        if self.rate is None:
            return np.full_like(np.asarray(c, dtype=float), self.k_r)
        return (self.rate(np.asarray(c) + eps) - self.rate(np.asarray(c) - eps)) / (2 * eps)

    def normal_speed(self, c0, da):
        return da / self.m * float(self.q(c0))

    def to_dict(self):
        if self.rate is not None:
            raise ConfigError("custom rate laws cannot be serialized")
        return {"c_eq": self.c_eq, "k_r": self.k_r, "m": self.m}


def evolve_interface(grid: CellGrid, c0: float, dt: float, kin: Kinetics, da: float) -> CellGrid:
    """Move the interface with the uniform normal speed (da / m) q_c(c0).

    Positive speed grows the solid. The result is reinitialized to a signed
    distance. Raises CFLError when the displacement exceeds one grid cell.
    """
    if dt <= 0:
        raise ConfigError("dt must be positive")
    if not 0.0 <= c0 <= 1.0:
        raise ConfigError(f"c0 = {c0} outside [0, 1]")
    vn = kin.normal_speed(c0, da)
    if vn == 0.0:
        return grid.copy()
    if abs(vn) * dt > grid.h:
        raise CFLError(
            f"interface displacement {abs(vn) * dt:.3e} exceeds h = {grid.h:.3e}; sub-step the update")
    return CellGrid(grid.resolution, reinitialize(grid.phi + vn * dt))


def advance_interface(grid: CellGrid, c0: float, dt: float, kin: Kinetics, da: float,
                      cfl: float = 0.5) -> CellGrid:
    """Advance over ``dt`` with as many equal sub-steps as the CFL bound needs."""
    vn = kin.normal_speed(c0, da)
    n = max(1, int(np.ceil(abs(vn) * dt / (cfl * grid.h))))
    for _ in range(n):
        grid = evolve_interface(grid, c0, dt / n, kin, da)
    return grid
