"""Structured rectangular mesh with tagged boundary facets and regions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError

SIDES = ("left", "right", "bottom", "top")


@dataclass
class GeoMesh:
    """``nx x ny`` cells on ``[0, Lx] x [0, Ly]``; cell (i, j) has flat index i * ny + j.

    ``tags[side]`` holds one tag string per facet along that side ("wall"
    unless a well/boundary segment claims it). ``regions`` maps region names
    to boolean cell masks of shape (nx, ny).
    """

    Lx: float
    Ly: float
    nx: int
    ny: int
    tags: dict = field(default_factory=dict)
    regions: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1 or self.Lx <= 0 or self.Ly <= 0:
            raise ConfigError("mesh needs positive extents and cell counts")
        for side in SIDES:
            n = self.side_count(side)
            t = self.tags.get(side)
            self.tags[side] = np.array(["wall"] * n, dtype=object) if t is None else np.asarray(t, dtype=object)
            if len(self.tags[side]) != n:
                raise ConfigError(f"side {side!r} needs {n} facet tags")

    @property
    def dx(self):
        return self.Lx / self.nx

    @property
    def dy(self):
        return self.Ly / self.ny

    @property
    def n_cells(self):
        return self.nx * self.ny

    @property
    def cell_area(self):
        return self.dx * self.dy

    def side_count(self, side):
        return self.ny if side in ("left", "right") else self.nx

    def centres(self):
        x = (np.arange(self.nx) + 0.5) * self.dx
        y = (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    def facet_centres(self, side):
        if side in ("left", "right"):
            y = (np.arange(self.ny) + 0.5) * self.dy
            x = np.full_like(y, 0.0 if side == "left" else self.Lx)
        else:
            x = (np.arange(self.nx) + 0.5) * self.dx
            y = np.full_like(x, 0.0 if side == "bottom" else self.Ly)
        return x, y

    def facet_cells(self, side):
        """Flat indices of the cells owning the facets of ``side``."""
        i = np.arange(self.nx)
        j = np.arange(self.ny)
        if side == "left":
            return 0 * self.ny + j
        if side == "right":
            return (self.nx - 1) * self.ny + j
        if side == "bottom":
            return i * self.ny
        return i * self.ny + self.ny - 1

    def facet_area(self, side):
        return self.dy if side in ("left", "right") else self.dx

    def normal_spacing(self, side):
        return self.dx if side in ("left", "right") else self.dy

    def tag_segment(self, side, lo, hi, tag):
        """Tag facets of ``side`` whose centre lies in [lo, hi] along the side."""
        x, y = self.facet_centres(side)
        s = y if side in ("left", "right") else x
        sel = (s >= lo) & (s <= hi)
        if not np.any(sel):
            raise ConfigError(f"segment [{lo}, {hi}] on {side} covers no facet")
        self.tags[side][sel] = tag
        return int(sel.sum())

    def add_region(self, name, x_range, y_range):
        X, Y = self.centres()
        m = (X >= x_range[0]) & (X <= x_range[1]) & (Y >= y_range[0]) & (Y <= y_range[1])
        if not np.any(m):
            raise ConfigError(f"region {name!r} contains no cell centre")
        self.regions[name] = m
        return m

    def locate(self, x, y):
        """Flat index of the cell containing (x, y)."""
        i = min(max(int(x / self.dx), 0), self.nx - 1)
        j = min(max(int(y / self.dy), 0), self.ny - 1)
        return i * self.ny + j

    def tag_names(self):
        names = set()
        for side in SIDES:
            names.update(self.tags[side].tolist())
        return sorted(names)
