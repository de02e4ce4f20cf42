"""Independent reference values used by the tests.

Nothing here calls the package's solvers: each oracle is a closed form or a
one-dimensional quadrature.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid


def circle_fraction(radius):
    """Pore fraction of a unit cell holding one solid disc."""
    return 1.0 - np.pi * radius**2


def circle_perimeter(radius):
    return 2.0 * np.pi * radius


def channel_permeability(gap, nu=1.0):
    """Plane Poiseuille flux per unit forcing through a channel of width ``gap``."""
    return gap**3 / (12.0 * nu)


def taylor_aris_quadrature(gap, pe, mean_velocity, n=20001):
    """Longitudinal effective diffusivity of a plane channel cell.

    The corrector satisfies psi'' = pe (u - U) across the gap with no-flux
    walls; the dispersion is gap * 1 + integral of psi'^2. The Poiseuille
    profile is built from its mean ``mean_velocity``.
    """
    y = np.linspace(0.0, gap, n)
    s = y / gap
    u = 6.0 * mean_velocity * s * (1.0 - s)
    dpsi = pe * cumulative_trapezoid(u - mean_velocity, y, initial=0.0)
    return gap + trapezoid(dpsi**2, y)


def taylor_aris_closed_form(gap, pe, mean_velocity):
    """gap * (1 + (pe U gap)^2 / 210), the classical plane-channel result."""
    return gap * (1.0 + (pe * mean_velocity * gap) ** 2 / 210.0)


def manufactured_darcy(x, y, Lx, Ly):
    """Pressure, its gradient and the source -div(grad p) for
    p = sin(pi x / Lx) sin(pi y / Ly) with unit permeability and viscosity."""
    a, b = np.pi / Lx, np.pi / Ly
    p = np.sin(a * x) * np.sin(b * y)
    src = (a**2 + b**2) * p
    return p, src
