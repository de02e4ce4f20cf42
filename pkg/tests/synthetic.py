"""Cheap labeled histories for plumbing tests.

The toy material integrates its input: lambda(t) = lambda0 - int (c - 1/2) dt,
and every other property is a smooth function of lambda and the velocity, so
outputs depend on the input history like the real cell problem does.
"""
from __future__ import annotations

import numpy as np

from multiscale_rno.datagen import SamplerConfig, sample_trajectory
from multiscale_rno.types import PropsSeries


def toy_labels(traj, lam0=0.5):
    dt = np.diff(traj.times)
    lam = lam0 - np.concatenate([[0.0], np.cumsum((traj.c0[:-1] - 0.5) * dt)])
    lam = np.clip(lam, 0.05, 0.95)
    K = 0.01 * lam**3
    D = 0.6 * lam
    vals = np.column_stack([
        K, 0.1 * K * traj.v0[:, 0], K,
        D + 10 * traj.v0[:, 0] ** 2, np.zeros_like(lam), np.zeros_like(lam), D,
        traj.v0[:, 0], traj.v0[:, 1], 2.0 * np.sqrt(np.pi * (1 - lam)), lam,
    ])
    return PropsSeries(traj.times, vals)


def toy_entries(n, steps=20, seed=0):
    cfg = SamplerConfig(T=1.0, M=3, c_max=0.2, v_max=0.004, steps=steps, seed=seed)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        tr = sample_trajectory(cfg, rng)
        out.append((tr, toy_labels(tr)))
    return out
