"""Random macroscopic input histories for labeling."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from ..errors import ConfigError
from ..types import Trajectory

MAX_OVERSHOOT = 1.2  # resample when |v| exceeds this multiple of v_max


@dataclass
class SamplerConfig:
    T: float = 1.0
    M: int = 5
    c_max: float = 0.1
    v_max: float = 0.004
    c0_range: tuple = (0.3, 0.7)
    steps: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.M < 1:
            raise ConfigError("sampler needs M >= 1")
        if self.T <= 0 or self.c_max <= 0 or self.v_max <= 0 or self.steps < 1:
            raise ConfigError("sampler T, maxima and steps must be positive")
        self.c0_range = tuple(float(x) for x in self.c0_range)

    def to_dict(self):
        d = asdict(self)
        d["c0_range"] = list(self.c0_range)
        return d


def sample_knots(cfg: SamplerConfig, rng: np.random.Generator):
    """Breakpoint times (M + 1,), signs (M, 3) and knot values (M + 1, 3)."""
    while True:
        inner = np.sort(rng.uniform(0.0, cfg.T, size=cfg.M - 1))
        t = np.concatenate([[0.0], inner, [cfg.T]])
        if np.all(np.diff(t) > 1e-9 * cfg.T):
            break
    signs = rng.choice([-1.0, 1.0], size=(cfg.M, 3))
    start = np.array([
        rng.uniform(*cfg.c0_range),
        rng.uniform(-cfg.v_max / 2, cfg.v_max / 2),
        rng.uniform(-cfg.v_max / 2, cfg.v_max / 2),
    ])
    scale = np.array([cfg.c_max, cfg.v_max, cfg.v_max])
    incr = signs * scale * np.sqrt(np.diff(t))[:, None]
    values = np.vstack([start, start + np.cumsum(incr, axis=0)])
    return t, signs, values


def sample_trajectory(cfg: SamplerConfig, rng: np.random.Generator, max_tries: int = 1000) -> Trajectory:
    """Random-sign square-root-of-time increments at random breakpoints,
    joined by a natural cubic spline and sampled on the solver grid."""
    times = np.linspace(0.0, cfg.T, cfg.steps + 1)
    for _ in range(max_tries):
        t, _, values = sample_knots(cfg, rng)
        spline = CubicSpline(t, values, axis=0, bc_type="natural")
        path = spline(times)
        if np.max(np.abs(path[:, 1:])) <= MAX_OVERSHOOT * cfg.v_max:
            return Trajectory(times, np.clip(path[:, 0], 0.0, 1.0), path[:, 1:])
    raise ConfigError("sampler could not draw a trajectory within the velocity bound")
