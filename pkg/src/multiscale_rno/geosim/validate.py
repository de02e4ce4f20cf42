"""Replay recorded monitor-point histories through the cell solver."""
from __future__ import annotations

import numpy as np

from ..errors import DataError
from ..microcell import CellConfig, build_microstructure, run_cell_trajectory
from ..microcell.transport import CLOG_THRESHOLD
from ..rno.metrics import series_errors
from ..rno.model import RNOModel, rno_forward
from ..types import PropsSeries


def clogging_time(series: PropsSeries, threshold=CLOG_THRESHOLD):
    """First time at which every diagonal permeability is below ``threshold``."""
    K = series.quantity("K").reshape(len(series), -1)
    blocked = (K[:, 0] < threshold) & (K[:, -1] < threshold)
    idx = np.nonzero(blocked)[0]
    return float(series.times[idx[0]]) if idx.size else None


def a_posteriori_validate(record, names, grid_spec, model: RNOModel, cell: CellConfig | None = None):
    """Per-property relative L2-in-time errors of the surrogate against the
    cell solver on each recorded monitor history.

    Returns ``{name: {"errors", "clog_truth", "clog_model", "clog_mismatch",
    "times", "truth", "model"}}``; ``clog_mismatch`` is a fraction of the
    horizon (None when neither run clogs, 1.0 when only one does).
    """
    cell = cell or CellConfig()
    report = {}
    for name in names:
        traj = record.monitor_trajectory(name)
        if len(traj) < 2:
            raise DataError(f"history at {name!r} has fewer than 2 steps")
        truth = run_cell_trajectory(build_microstructure(grid_spec), traj, cell)
        xi0 = np.asarray(record.monitors[name]["xi0"], dtype=float)
        pred = rno_forward(model, traj, xi0=xi0)
        horizon = traj.times[-1] - traj.times[0]
        ct, cm = clogging_time(truth), clogging_time(pred)
        if ct is None and cm is None:
            mis = None
        elif ct is None or cm is None:
            mis = 1.0
        else:
            mis = abs(ct - cm) / horizon
        report[name] = {"errors": series_errors(truth, pred), "clog_truth": ct, "clog_model": cm,
                        "clog_mismatch": mis, "times": traj.times, "truth": truth.values,
                        "model": pred.values}
    return report
