"""Labeled datasets: generation through the cell solver and file round-trips."""
from __future__ import annotations

import copy
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import container
from ..errors import DataError, MultiscaleError, SchemaError
from ..microcell import CellConfig, build_microstructure, run_cell_trajectory
from ..types import INPUT_NAMES, OUTPUT_NAMES, PropsSeries, Trajectory
from .sampler import SamplerConfig, sample_trajectory

log = logging.getLogger(__name__)

MAGIC = b"MSRNODS\n"
VERSION = 1
COLUMNS = ("t",) + INPUT_NAMES + OUTPUT_NAMES + ("clog1", "clog2")
MAX_FAILURE_RATE = 0.10

DEFAULT_GRID = {"resolution": 64, "primitives": [{"type": "circle", "center": [0.5, 0.5], "radius": 0.4}]}


@dataclass
class Dataset:
    entries: list
    provenance: dict
    seeds: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    def __post_init__(self):
        if len(set(self.seeds)) != len(self.seeds):
            raise DataError("dataset contains duplicated entry seeds")


def entry_seed(master: int, index: int, attempt: int) -> int:
    return int(np.random.SeedSequence([int(master), int(index), int(attempt)]).generate_state(1, np.uint64)[0]
               % (2**63))


def label_entry(grid_spec, sampler: SamplerConfig, cell: CellConfig, seed: int):
    """Draw and label one trajectory; returns (Trajectory, PropsSeries)."""
    grid = build_microstructure(grid_spec)
    traj = sample_trajectory(sampler, np.random.default_rng(seed))
    return traj, run_cell_trajectory(grid, traj, cell)


def _label_job(args):
    grid_spec, sampler, cell_dict, seed = args
    try:
        return label_entry(grid_spec, sampler, CellConfig.from_dict(cell_dict), seed), None
    except MultiscaleError as exc:
        return None, str(exc)


def provenance_of(grid_spec, sampler: SamplerConfig, cell: CellConfig):
    s = sampler.to_dict()
    s.pop("seed", None)
    return {"grid": copy.deepcopy(dict(grid_spec)), "sampler": s, "cell": cell.to_dict()}


def generate_dataset(grid_spec=None, sampler: SamplerConfig | None = None, n: int = 1,
                     cell: CellConfig | None = None, jobs: int = 1, progress=None,
                     max_failure_rate: float = MAX_FAILURE_RATE) -> Dataset:
    """Label ``n`` trajectories, replacing failed cell solves.

    Entry ``i`` uses a seed derived from (master seed, i, attempt), so the
    result does not depend on ``jobs`` or scheduling. Aborts when failures
    exceed ``max_failure_rate`` of ``n``.
    """
    if n < 1:
        raise DataError("dataset size must be >= 1")
    grid_spec = dict(grid_spec or DEFAULT_GRID)
    sampler = sampler or SamplerConfig()
    cell = cell or CellConfig()
    cell_dict = cell.to_dict()
    results = [None] * n
    seeds = [None] * n
    attempts = [0] * n
    failures = []
    max_fail = int(np.floor(max_failure_rate * n))
    pending = list(range(n))
    pool = ProcessPoolExecutor(jobs) if jobs > 1 else None
    try:
        while pending:
            args = [(grid_spec, sampler, cell_dict, entry_seed(sampler.seed, i, attempts[i])) for i in pending]
            outs = list(pool.map(_label_job, args)) if pool else map(_label_job, args)
            retry = []
            for i, a, (res, err) in zip(pending, args, outs):
                if res is None:
                    failures.append({"index": i, "seed": a[3], "error": err})
                    log.warning("entry %d (seed %d) failed: %s", i, a[3], err)
                    if len(failures) > max_fail:
                        raise DataError(
                            f"{len(failures)} of {n} cell trajectories failed (> {max_failure_rate:.0%}); "
                            f"last error: {err}")
                    attempts[i] += 1
                    retry.append(i)
                else:
                    results[i] = res
                    seeds[i] = a[3]
                    if progress:
                        progress(i)
            pending = retry
    finally:
        if pool:
            pool.shutdown()
    return Dataset(results, provenance_of(grid_spec, sampler, cell), seeds,
                   {"master_seeds": [sampler.seed], "failures": failures})


# --------------------------------------------------------------------------
# files
# --------------------------------------------------------------------------

def write_dataset(ds: Dataset, path):
    if not ds.entries:
        raise DataError("refusing to write an empty dataset")
    lengths = {len(tr) for tr, _ in ds.entries}
    if len(lengths) != 1:
        raise DataError("all entries must share a step count")
    cols = {c: [] for c in COLUMNS}
    for tr, ps in ds.entries:
        cols["t"].append(tr.times)
        for k, name in enumerate(INPUT_NAMES):
            cols[name].append(tr.inputs[:, k])
        for k, name in enumerate(OUTPUT_NAMES):
            cols[name].append(ps.values[:, k])
        cols["clog1"].append(ps.clogged[:, 0])
        cols["clog2"].append(ps.clogged[:, 1])
    arrays = {c: np.array(v) for c, v in cols.items()}
    arrays["seed"] = np.array(ds.seeds if ds.seeds else [-1] * len(ds.entries), dtype=np.int64)
    meta = {"provenance": ds.provenance, "n": len(ds.entries), "columns": list(COLUMNS),
            "info": json.loads(json.dumps(ds.info, default=str))}
    container.write(path, "dataset", VERSION, meta, arrays, MAGIC)


def read_dataset(path) -> Dataset:
    header, arrays = container.read(path, MAGIC)
    if header.get("kind") != "dataset":
        raise SchemaError(f"{path} is not a dataset file")
    if header.get("version") != VERSION:
        raise SchemaError(f"dataset version {header.get('version')} != supported {VERSION}")
    for c in COLUMNS:
        if c not in arrays:
            raise SchemaError(f"dataset is missing column {c!r}")
    n = header["meta"]["n"]
    shapes = {arrays[c].shape for c in COLUMNS}
    if len(shapes) != 1 or next(iter(shapes))[0] != n:
        raise SchemaError(f"dataset columns have inconsistent shapes {sorted(shapes)}")
    entries = []
    for i in range(n):
        tr = Trajectory(arrays["t"][i], arrays["c0"][i], np.column_stack([arrays["v1"][i], arrays["v2"][i]]))
        vals = np.column_stack([arrays[c][i] for c in OUTPUT_NAMES])
        clog = np.column_stack([arrays["clog1"][i], arrays["clog2"][i]])
        entries.append((tr, PropsSeries(tr.times, vals, clog)))
    seeds = [int(s) for s in arrays.get("seed", [])]
    seeds = [] if all(s == -1 for s in seeds) else seeds
    return Dataset(entries, header["meta"]["provenance"], seeds, header["meta"].get("info", {}))


def merge_datasets(*datasets: Dataset) -> Dataset:
    """Concatenate datasets that share provenance."""
    if not datasets:
        raise DataError("nothing to merge")
    prov = datasets[0].provenance
    for d in datasets[1:]:
        if d.provenance != prov:
            raise DataError("cannot merge datasets with different provenance")
    entries, seeds, masters = [], [], []
    for d in datasets:
        entries += d.entries
        seeds += d.seeds
        masters += d.info.get("master_seeds", [])
    return Dataset(entries, prov, seeds, {"master_seeds": masters})
