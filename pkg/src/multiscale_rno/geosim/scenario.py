"""Scenario configuration and the bundled well/block scenarios."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

from ..errors import ConfigError
from ..microcell.evolve import Kinetics
from .mesh import SIDES, GeoMesh


@dataclass
class ScenarioConfig:
    """Declarative description of a geological-scale run.

    ``cell_dt`` is the surrogate step in cell time. Geological time follows
    as ``t = tau * cell_da / da`` so that deposited mass per unit cell time
    does not depend on the macroscopic Damkohler number.
    """

    name: str = "custom"
    Lx: float = 8.0
    Ly: float = 4.0
    nx: int = 40
    ny: int = 20
    wells: list = field(default_factory=list)
    pe: float = 1000.0
    da: float = 0.001
    nu: float = 1.0
    f: tuple = (0.0, 0.0)
    kinetics: dict = field(default_factory=lambda: {"c_eq": 0.5, "k_r": 1.0, "m": 1.0})
    cell_da: float = 1.0
    cell_dt: float = 0.0075
    steps: int = 220
    regions: list = field(default_factory=list)
    monitors: list = field(default_factory=list)
    snapshot_every: int = 110
    init_iterations: int = 3
    symmetrize_d: bool = False
    advection: str = "darcy"
    transient: bool = False
    checkpoint: str | None = None

    def __post_init__(self):
        if self.pe <= 0 or self.da <= 0:
            raise ConfigError("Pe and Da must be positive")
        if self.nu <= 0 or self.cell_da <= 0 or self.cell_dt <= 0:
            raise ConfigError("nu, cell_da and cell_dt must be positive")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if not self.wells:
            raise ConfigError("scenario needs at least one well")
        tags = {}
        for w in self.wells:
            for key in ("tag", "side", "range", "p", "c"):
                if key not in w:
                    raise ConfigError(f"well entry missing field {key!r}")
            if w["side"] not in SIDES:
                raise ConfigError(f"unknown side {w['side']!r}")
            if w["tag"] in tags and tags[w["tag"]] != (w["p"], w["c"]):
                raise ConfigError(f"well tag {w['tag']!r} has conflicting boundary data")
            tags[w["tag"]] = (w["p"], w["c"])
        if len({p for p, _ in tags.values()}) < 2:
            raise ConfigError("inlet and outlet pressures must differ")
        for r in self.regions:
            if "name" not in r or "x" not in r or "y" not in r:
                raise ConfigError("region entry needs name, x and y")
            if ("k_factor" in r) == ("xi0" in r):
                raise ConfigError(f"region {r['name']!r} needs exactly one of k_factor or xi0")
        for m in self.monitors:
            if not {"name", "x", "y"} <= set(m):
                raise ConfigError("monitor entry needs name, x and y")
            if not (0 <= m["x"] <= self.Lx and 0 <= m["y"] <= self.Ly):
                raise ConfigError(f"monitor {m['name']!r} lies outside the domain")
        self.f = tuple(float(x) for x in self.f)

    @property
    def geo_dt(self):
        return self.cell_dt * self.cell_da / self.da

    def kinetics_obj(self):
        return Kinetics(**self.kinetics)

    def pressures(self):
        return {w["tag"]: float(w["p"]) for w in self.wells}

    def concentrations(self):
        return {w["tag"]: float(w["c"]) for w in self.wells}

    def inlet_outlet(self):
        """Tags with the highest and lowest pressure."""
        p = self.pressures()
        return max(p, key=p.get), min(p, key=p.get)

    def build_mesh(self) -> GeoMesh:
        mesh = GeoMesh(self.Lx, self.Ly, self.nx, self.ny)
        for w in self.wells:
            mesh.tag_segment(w["side"], w["range"][0], w["range"][1], w["tag"])
        for r in self.regions:
            mask = mesh.add_region(r["name"], r["x"], r["y"])
            overlap = [o for o, m in mesh.regions.items() if o != r["name"] and (m & mask).any()]
            if overlap:
                raise ConfigError(f"region {r['name']!r} overlaps {overlap}")
        return mesh

    def to_dict(self):
        return copy.deepcopy({k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()})

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown scenario field(s): {', '.join(sorted(extra))}")
        return cls(**copy.deepcopy(d))

    def with_updates(self, **kw):
        d = self.to_dict()
        d.update(kw)
        return ScenarioConfig.from_dict(d)


_WELLS = [
    {"tag": "inlet", "side": "left", "range": [1.6, 2.4], "p": 1.0e5, "c": 0.6},
    {"tag": "outlet", "side": "right", "range": [1.6, 2.4], "p": 1.0e4, "c": 0.4},
]

_EDGES = [
    {"tag": "inlet", "side": "left", "range": [0.0, 4.0], "p": 1.0e5, "c": 0.4},
    {"tag": "outlet", "side": "right", "range": [0.0, 4.0], "p": 1.0e4, "c": 0.5},
]

_BLOCKS = [
    ([1.2, 2.4], [1.4, 2.6]),
    ([3.4, 4.6], [0.4, 1.6]),
    ([3.4, 4.6], [2.4, 3.6]),
    ([5.6, 6.8], [1.4, 2.6]),
]


def _blocks(factor):
    return [{"name": f"block{i + 1}", "x": x, "y": y, "k_factor": factor} for i, (x, y) in enumerate(_BLOCKS)]


BUNDLED = {
    "uniform-wells": dict(
        name="uniform-wells", wells=_WELLS, nu=2.0e5,
        monitors=[{"name": "inlet", "x": 0.1, "y": 1.9},
                  {"name": "middle", "x": 4.1, "y": 1.9},
                  {"name": "outlet", "x": 7.9, "y": 1.9}],
    ),
    "high-perm-blocks": dict(
        name="high-perm-blocks", wells=_EDGES, nu=2.0e5, regions=_blocks(10.0),
        monitors=[{"name": "block", "x": 6.1, "y": 2.1},
                  {"name": "matrix", "x": 6.1, "y": 0.5}],
    ),
    "low-perm-blocks": dict(
        name="low-perm-blocks", wells=_EDGES, nu=2.0e5, regions=_blocks(0.1),
        monitors=[{"name": "block", "x": 6.1, "y": 2.1},
                  {"name": "matrix", "x": 6.1, "y": 0.5}],
    ),
}


def bundled_scenario(name: str, **overrides) -> ScenarioConfig:
    if name not in BUNDLED:
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(BUNDLED)}")
    d = copy.deepcopy(BUNDLED[name])
    d.update(overrides)
    return ScenarioConfig(**d)
