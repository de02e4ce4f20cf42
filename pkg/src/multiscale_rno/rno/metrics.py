"""Per-property error metrics and the time-step refinement study."""
from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline

from ..errors import ConfigError
from ..types import PROPERTY_SLICES, PropsSeries, Trajectory
from .model import RNOModel, rno_forward, trapezoid_weights

PROPERTIES = ("K", "D", "vbar", "gamma", "lambda")


def _flat(series: PropsSeries, name):
    q = series.quantity(name)
    return q.reshape(len(series), -1)


def relative_l2_time(times, truth, pred):
    """sqrt(int |pred - truth|^2 dt / int |truth|^2 dt) for (n, m) arrays."""
    w = trapezoid_weights(times)[0]
    num = np.sum(w[:, None] * (pred - truth) ** 2)
    den = np.sum(w[:, None] * truth ** 2)
    return float(np.sqrt(num / den)) if den > 0 else np.nan


def series_errors(truth: PropsSeries, pred: PropsSeries):
    return {p: relative_l2_time(truth.times, _flat(truth, p), _flat(pred, p)) for p in PROPERTIES}


def property_errors(model: RNOModel, entries, vbar_zero_tol: float = 1e-10):
    """Average normalized test error per property, on physical quantities.

    For each property this is sqrt(mean_d e_d^2), where e_d is the relative
    L2-in-time error of trajectory d. The v-bar error is reported twice: over
    all trajectories, and without the trajectories whose v-bar truth is
    essentially zero (where a relative error is meaningless).
    """
    per = {p: [] for p in PROPERTIES}
    vbar_nz = []
    for tr, truth in entries:
        pred = rno_forward(model, tr)
        e = series_errors(truth, pred)
        for p in PROPERTIES:
            if np.isfinite(e[p]):
                per[p].append(e[p])
        vb = _flat(truth, "vbar")
        if np.sqrt(np.mean(vb ** 2)) > vbar_zero_tol and np.isfinite(e["vbar"]):
            vbar_nz.append(e["vbar"])

    def agg(v):
        return float(np.sqrt(np.mean(np.square(v)))) if v else np.nan

    out = {p: agg(v) for p, v in per.items()}
    out["vbar_nonzero"] = agg(vbar_nz)
    return out


def resample_trajectory(traj: Trajectory, factor: float) -> Trajectory:
    """Same input function on a grid with step ``factor`` times the original.

    The input function is the cubic spline through the given samples, so all
    refinements see one underlying continuous history.
    """
    t = traj.times
    n_new = int(round((len(t) - 1) / factor))
    if n_new < 1 or abs(n_new * factor - (len(t) - 1)) > 1e-9:
        raise ConfigError(f"step factor {factor} does not divide the {len(t) - 1} steps of the history")
    times = np.linspace(t[0], t[-1], n_new + 1)
    cs_c = CubicSpline(t, traj.c0)
    cs_v = CubicSpline(t, traj.v0, axis=0)
    return Trajectory(times, np.clip(cs_c(times), 0.0, 1.0), cs_v(times))


def timestep_independence(model: RNOModel, traj: Trajectory, factors=(0.25, 0.5, 1.0, 2.0),
                          floor_fraction: float = 0.01, scale: str = "property"):
    """Compare outputs at shared times across step refinements.

    Returns a dict ``factor -> per-component error`` against the factor-1 run.
    Each component error is the max over shared times of |a - b| divided by a
    scale. With ``scale="property"`` the scale is the largest reference
    magnitude over the components of the same property, so an off-diagonal
    entry that vanishes by symmetry is measured against its tensor. With
    ``scale="component"`` only the component itself counts. Either scale is
    floored at ``floor_fraction`` times the data range of the component.
    """
    if scale not in ("property", "component"):
        raise ConfigError(f"unknown scale {scale!r}")
    runs = {f: rno_forward(model, resample_trajectory(traj, f)) for f in factors}
    coarsest = max(factors)
    shared = runs[coarsest].times
    ref = runs[1.0] if 1.0 in runs else runs[min(factors)]
    nz = model.normalizer
    lo, hi = nz.denormalize_outputs(np.zeros(11)), nz.denormalize_outputs(np.ones(11))
    rng = np.abs(hi - lo)

    def at(series, times):
        idx = np.searchsorted(series.times, times - 1e-12)
        assert np.allclose(series.times[idx], times)
        return series.values[idx]

    r = at(ref, shared)
    mag = np.max(np.abs(r), axis=0)
    if scale == "property":
        for sl in PROPERTY_SLICES.values():
            mag[sl] = mag[sl].max()
    scale = np.maximum(mag, floor_fraction * rng)
    scale = np.where(scale > 0, scale, 1.0)
    return {f: np.max(np.abs(at(s, shared) - r), axis=0) / scale for f, s in runs.items()}
