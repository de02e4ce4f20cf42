"""Core value types passed between the cell solver, the surrogate and the
geological-scale simulator."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

# Column order used for every flat representation of the five effective
# quantities (CSV export, dataset files, surrogate outputs).
OUTPUT_NAMES = (
    "K11", "K12", "K22",
    "D11", "D12", "D21", "D22",
    "vbar1", "vbar2",
    "gamma", "lambda",
)
PROPERTY_SLICES = {
    "K": slice(0, 3),
    "D": slice(3, 7),
    "vbar": slice(7, 9),
    "gamma": slice(9, 10),
    "lambda": slice(10, 11),
}
INPUT_NAMES = ("c0", "v1", "v2")


@dataclass
class EffectiveProps:
    """Effective quantities of one unit cell at one instant."""

    K: np.ndarray
    D: np.ndarray
    vbar: np.ndarray
    gamma: float
    lam: float
    clogged: tuple = (False, False)

    def to_vector(self) -> np.ndarray:
        K, D, v = self.K, self.D, self.vbar
        return np.array([
            K[0, 0], 0.5 * (K[0, 1] + K[1, 0]), K[1, 1],
            D[0, 0], D[0, 1], D[1, 0], D[1, 1],
            v[0], v[1], self.gamma, self.lam,
        ])

    @classmethod
    def from_vector(cls, x) -> "EffectiveProps":
        x = np.asarray(x, dtype=float)
        K = np.array([[x[0], x[1]], [x[1], x[2]]])
        D = np.array([[x[3], x[4]], [x[5], x[6]]])
        return cls(K=K, D=D, vbar=x[7:9].copy(), gamma=float(x[9]), lam=float(x[10]))


@dataclass
class Trajectory:
    """Macroscopic input history {c0(t), v0(t)} sampled at ``times``."""

    times: np.ndarray
    c0: np.ndarray
    v0: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.c0 = np.asarray(self.c0, dtype=float)
        self.v0 = np.asarray(self.v0, dtype=float).reshape(len(self.c0), 2)
        self.validate()

    def validate(self):
        t = self.times
        if not (len(t) == len(self.c0) == len(self.v0)):
            raise DataError("trajectory fields have unequal lengths")
        if len(t) == 0:
            raise DataError("empty trajectory")
        if t[0] != 0.0:
            raise DataError("trajectory times must start at 0")
        if np.any(np.diff(t) <= 0):
            raise DataError("trajectory times must be strictly increasing")
        if np.any(self.c0 < 0) or np.any(self.c0 > 1):
            raise DataError("concentration outside [0, 1]")

    def __len__(self):
        return len(self.times)

    @property
    def inputs(self) -> np.ndarray:
        """(n, 3) array of [c0, v1, v2]."""
        return np.column_stack([self.c0, self.v0])

    def prefix(self, n: int) -> "Trajectory":
        return Trajectory(self.times[:n], self.c0[:n], self.v0[:n])

    @classmethod
    def constant(cls, c0: float, v0, T: float = 1.0, steps: int = 200) -> "Trajectory":
        times = np.linspace(0.0, T, steps + 1)
        v = np.tile(np.asarray(v0, dtype=float), (steps + 1, 1))
        return cls(times, np.full(steps + 1, float(c0)), v)


@dataclass
class PropsSeries:
    """Time series of effective properties aligned with a trajectory."""

    times: np.ndarray
    values: np.ndarray  # (n, len(OUTPUT_NAMES)) physical units
    clogged: np.ndarray = field(default=None)  # (n, 2) bool

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.times), len(OUTPUT_NAMES))
        if self.clogged is None:
            self.clogged = np.zeros((len(self.times), 2), dtype=bool)
        self.clogged = np.asarray(self.clogged, dtype=bool).reshape(len(self.times), 2)

    def __len__(self):
        return len(self.times)

    def __getitem__(self, n) -> EffectiveProps:
        p = EffectiveProps.from_vector(self.values[n])
        p.clogged = tuple(bool(b) for b in self.clogged[n])
        return p

    @classmethod
    def from_props(cls, times, props) -> "PropsSeries":
        vals = np.array([p.to_vector() for p in props])
        clog = np.array([p.clogged for p in props], dtype=bool)
        return cls(times, vals, clog)

    def quantity(self, name: str) -> np.ndarray:
        """Physical quantity as an array: K and D as (n, 2, 2)."""
        v = self.values
        if name == "K":
            K = np.empty((len(v), 2, 2))
            K[:, 0, 0], K[:, 0, 1], K[:, 1, 0], K[:, 1, 1] = v[:, 0], v[:, 1], v[:, 1], v[:, 2]
            return K
        if name == "D":
            return v[:, 3:7].reshape(-1, 2, 2)
        return v[:, PROPERTY_SLICES[name]].squeeze(-1) if name in ("gamma", "lambda") else v[:, PROPERTY_SLICES[name]]
