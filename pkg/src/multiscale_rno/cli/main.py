"""``multiscale-rno`` command-line entry point."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from ..datagen import (
    DEFAULT_GRID,
    SamplerConfig,
    generate_dataset,
    read_dataset,
    sample_trajectory,
    write_dataset,
)
from ..errors import ConfigError, DataError, MultiscaleError
from ..geosim import (
    ScenarioConfig,
    a_posteriori_validate,
    bundled_scenario,
    load_record,
    run_multiscale,
)
from ..io import atomic_write_text, write_props_csv, write_table_csv, write_vtk_structured_points
from ..microcell import CellConfig, build_microstructure, run_cell_trajectory
from ..rno import (
    RNOConfig,
    RNOModel,
    TrainConfig,
    compute_loss,
    fit_normalizer,
    load_model,
    property_errors,
    save_model,
    split_dataset,
    timestep_independence,
    train,
)
from ..types import OUTPUT_NAMES, Trajectory
from .config import load_config
from .manifest import RunManifest

log = logging.getLogger("multiscale_rno")

COMMANDS = ("cell", "gen-data", "train", "eval", "simulate", "validate", "export")


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _cell_config(d):
    return CellConfig.from_dict(d or {})


def _grid_spec(d):
    return dict(d) if d else dict(DEFAULT_GRID)


def build_trajectory(spec: dict, seed: int) -> Trajectory:
    kind = spec["type"]
    if kind == "constant":
        for key in ("c0", "v0"):
            if key not in spec:
                raise ConfigError(f"constant trajectory needs field 'trajectory.{key}'")
        return Trajectory.constant(float(spec["c0"]), spec["v0"], float(spec.get("T", 1.0)),
                                   int(spec.get("steps", 200)))
    if kind == "knots":
        for key in ("times", "c0", "v0"):
            if key not in spec:
                raise ConfigError(f"knot trajectory needs field 'trajectory.{key}'")
        t = np.asarray(spec["times"], dtype=float)
        c = np.asarray(spec["c0"], dtype=float)
        v = np.asarray(spec["v0"], dtype=float)
        if t.ndim != 1 or len(t) < 2 or c.shape != t.shape or v.shape != (len(t), 2):
            raise ConfigError("knot trajectory needs matching times, c0 and v0 (pairs) lists")
        times = np.linspace(t[0], t[-1], int(spec.get("steps", 200)) + 1)
        vals = CubicSpline(t, np.column_stack([c, v]), axis=0, bc_type="natural")(times)
        return Trajectory(times - times[0], np.clip(vals[:, 0], 0.0, 1.0), vals[:, 1:])
    s = dict(spec.get("sampler") or {})
    s.setdefault("seed", spec.get("seed", seed))
    cfg = SamplerConfig(**s)
    return sample_trajectory(cfg, np.random.default_rng(cfg.seed))


def _need_file(path, what):
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{what} not found: {p}")
    return p


# --------------------------------------------------------------------------
# commands: each returns nothing and writes into ``out``
# --------------------------------------------------------------------------

def cmd_cell(cfg, out: Path, man: RunManifest, jobs: int):
    grid = build_microstructure(cfg["grid"])
    seed = cfg.get("seed", 0)
    traj = build_trajectory(cfg["trajectory"], seed)
    man.seeds["trajectory"] = cfg["trajectory"].get("seed", seed)
    series, grids = run_cell_trajectory(grid, traj, _cell_config(cfg.get("cell")), keep_grids=True)
    write_props_csv(out / "properties.csv", series)
    write_table_csv(out / "inputs.csv", ("t", "c0", "v1", "v2"), np.column_stack([traj.times, traj.inputs]))
    write_table_csv(out / "clogged.csv", ("t", "clog1", "clog2"),
                    np.column_stack([series.times, series.clogged.astype(float)]))
    every = cfg.get("snapshot_every", 0)
    steps = {0, len(grids) - 1} | (set(range(0, len(grids), every)) if every > 0 else set())
    for k in sorted(steps):
        g = grids[k]
        write_vtk_structured_points(out / f"level_set_{k:05d}.vtk", {"phi": g.phi}, (g.h, g.h),
                                    title=f"level set step {k}")


def cmd_gen_data(cfg, out: Path, man: RunManifest, jobs: int):
    s = dict(cfg.get("sampler") or {})
    s.setdefault("seed", cfg.get("seed", 0))
    sampler = SamplerConfig(**s)
    man.seeds["sampler"] = sampler.seed
    ds = generate_dataset(_grid_spec(cfg.get("grid")), sampler, cfg["n"], _cell_config(cfg.get("cell")),
                          jobs=jobs, max_failure_rate=cfg.get("max_failure_rate", 0.1))
    write_dataset(ds, out / "dataset.bin")
    atomic_write_text(out / "failures.json", json.dumps(ds.info.get("failures", []), indent=2) + "\n")


def cmd_train(cfg, out: Path, man: RunManifest, jobs: int):
    path = _need_file(cfg["dataset"], "dataset")
    man.add_input(path)
    ds = read_dataset(path)
    seed = cfg.get("seed", 0)
    split = {"test_fraction": 0.2, "seed": seed, **(cfg.get("split") or {})}
    tr, te = split_dataset(ds.entries, split["test_fraction"], split["seed"])
    nzc = {"grouping": "component", "log_k": True, **(cfg.get("normalizer") or {})}
    nz = fit_normalizer(tr, nzc["grouping"], nzc["log_k"])
    mc = RNOConfig(**(cfg.get("model") or {}))
    hyper = TrainConfig(**{"seed": seed, **(cfg.get("training") or {})})
    init_seed = cfg.get("init_seed", seed)
    man.seeds.update(split=split["seed"], training=hyper.seed, init=init_seed)
    model = RNOModel.init(mc, nz, seed=init_seed)
    t0 = time.perf_counter()
    res = train(model, tr, te, hyper)
    wall = time.perf_counter() - t0  # kept out of the checkpoint so reruns are bitwise equal
    res.model.metadata["dataset_sha256"] = man.inputs[str(path)]
    save_model(res.model, out / "model.ckpt")
    write_table_csv(out / "loss.csv", ("epoch", "train_loss", "test_loss"), res.loss_rows())
    atomic_write_text(out / "timing.json", json.dumps({"train_seconds": wall}) + "\n")
    if res.diverged:
        log.warning("training diverged; the checkpoint holds the last finite parameters")


def cmd_eval(cfg, out: Path, man: RunManifest, jobs: int):
    path = _need_file(cfg["dataset"], "dataset")
    man.add_input(path)
    ds = read_dataset(path)
    split = {"test_fraction": 0.2, "seed": cfg.get("seed", 0), **(cfg.get("split") or {})}
    _, te = split_dataset(ds.entries, split["test_fraction"], split["seed"])
    if not te:
        raise DataError("evaluation split is empty")
    rows, report = [], {"checkpoints": {}}
    header = ("k", "test_loss", "K", "D", "vbar", "vbar_nonzero", "gamma", "lambda")
    for i, ck in enumerate(cfg["checkpoints"]):
        p = _need_file(ck, "checkpoint")
        man.add_input(p)
        model = load_model(p)
        errs = property_errors(model, te)
        loss = compute_loss(model, te)
        rows.append([model.k, loss, *(errs[h] for h in header[2:])])
        entry = {"k": model.k, "test_loss": loss, "errors": errs}
        if cfg.get("dt_sweep"):
            idx = cfg.get("sweep_index", 0)
            if not 0 <= idx < len(te):
                raise ConfigError(f"sweep_index {idx} outside the test split (size {len(te)})")
            res = timestep_independence(model, te[idx][0], tuple(cfg["dt_factors"]))
            entry["dt_sweep"] = {str(f): e.tolist() for f, e in res.items()}
            write_table_csv(out / f"dt_sweep_{i}_k{model.k}.csv", ("factor", "max_error", *OUTPUT_NAMES),
                            [[f, float(e.max()), *e] for f, e in res.items()])
        report["checkpoints"][str(ck)] = entry
    write_table_csv(out / "eval.csv", header, rows)
    atomic_write_text(out / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")


def _scenario(cfg) -> ScenarioConfig:
    sc, over = cfg["scenario"], dict(cfg.get("overrides") or {})
    if isinstance(sc, str):
        return bundled_scenario(sc, **over)
    return ScenarioConfig.from_dict({**sc, **over})


def cmd_simulate(cfg, out: Path, man: RunManifest, jobs: int):
    p = _need_file(cfg["checkpoint"], "checkpoint")
    man.add_input(p)
    sc = _scenario(cfg)
    sc.checkpoint = str(p)
    model = load_model(p)
    rec = run_multiscale(sc, model, out_dir=out)
    atomic_write_text(out / "timing.json", json.dumps({"wall_seconds": rec.wall_time}) + "\n")


def cmd_validate(cfg, out: Path, man: RunManifest, jobs: int):
    rec = load_record(cfg["run"])
    man.add_input(Path(cfg["run"]) / "record.json" if Path(cfg["run"]).is_dir() else cfg["run"])
    p = _need_file(cfg["checkpoint"], "checkpoint")
    man.add_input(p)
    model = load_model(p)
    names = cfg.get("monitors") or sorted(rec.monitors)
    missing = [n for n in names if n not in rec.monitors]
    if missing:
        raise ConfigError(f"run has no monitor point(s) {missing}")
    rep = a_posteriori_validate(rec, names, _grid_spec(cfg.get("grid")), model, _cell_config(cfg.get("cell")))
    rows, summary = [], {}
    for name, r in rep.items():
        for prop, e in r["errors"].items():
            rows.append([name, prop, e])
        summary[name] = {"errors": r["errors"], "clog_truth": r["clog_truth"], "clog_model": r["clog_model"],
                         "clog_mismatch": r["clog_mismatch"]}
        cols = ("t",) + tuple(f"truth_{c}" for c in OUTPUT_NAMES) + tuple(f"model_{c}" for c in OUTPUT_NAMES)
        write_table_csv(out / f"overlay_{name}.csv", cols,
                        np.column_stack([r["times"], r["truth"], r["model"]]))
    write_table_csv(out / "validation.csv", ("monitor", "property", "rel_l2_error"), rows)
    atomic_write_text(out / "report.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")


def cmd_export(cfg, out: Path, man: RunManifest, jobs: int):
    kind = cfg["kind"]
    if kind == "grid":
        g = build_microstructure(_grid_spec(cfg.get("grid")))
        write_vtk_structured_points(out / "level_set.vtk", {"phi": g.phi}, (g.h, g.h), title="level set")
        return
    if "source" not in cfg:
        raise ConfigError(f"export of {kind} needs field 'source'")
    src = Path(cfg["source"])
    if kind == "run":
        rec = load_record(src)
        man.add_input(src / "record.json" if src.is_dir() else src)
        for name in rec.monitors:
            write_props_csv(out / f"monitor_{name}.csv", rec.monitor_series(name))
        return
    _need_file(src, kind)
    man.add_input(src)
    if kind == "dataset":
        ds = read_dataset(src)
        for i, (tr, ps) in enumerate(ds.entries):
            write_table_csv(out / f"trajectory_{i:04d}.csv", ("t", "c0", "v1", "v2") + OUTPUT_NAMES,
                            np.column_stack([tr.times, tr.inputs, ps.values]))
    else:
        m = load_model(src)
        doc = {"config": m.config.to_dict(), "normalizer": m.normalizer.to_dict() if m.normalizer else None,
               "metadata": m.metadata, "xi0": m.xi0.tolist(), "n_params": int(m.n_params)}
        atomic_write_text(out / "model.json", json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


HANDLERS = {"cell": cmd_cell, "gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
            "simulate": cmd_simulate, "validate": cmd_validate, "export": cmd_export}


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _global_flags(p, defaults):
    d = argparse.SUPPRESS if not defaults else None
    p.add_argument("--config", default=d, help="YAML config (or a run manifest to replay)")
    p.add_argument("--seed", type=int, default=d, help="override the config's top-level seed")
    p.add_argument("--jobs", type=int, default=argparse.SUPPRESS if not defaults else 1,
                   help="worker processes")
    p.add_argument("--out", default=d, help="fresh output directory")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if not defaults else False)


def build_parser():
    parser = argparse.ArgumentParser(prog="multiscale-rno", description=__doc__)
    _global_flags(parser, True)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"cell": "run the cell solver on one input history", "gen-data": "label a training dataset",
             "train": "train a surrogate", "eval": "evaluate checkpoints on the test split",
             "simulate": "run a geological-scale scenario", "validate": "replay monitor histories",
             "export": "convert artifacts to CSV/VTK/JSON"}
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        _global_flags(sp, False)
    return parser


def _prepare_out(out, command):
    if out is None:
        out = Path("runs") / f"{command}-{time.strftime('%Y%m%d-%H%M%S')}"
    out = Path(out)
    if out.exists() and any(out.iterdir()):
        raise ConfigError(f"output directory {out} is not empty")
    out.mkdir(parents=True, exist_ok=True)
    return out


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if not args.config:
            raise ConfigError("--config is required")
        cfg_path = Path(args.config)
        if not cfg_path.is_file():
            raise ConfigError(f"config file not found: {cfg_path}")
        cfg = load_config(cfg_path, args.command)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        out = _prepare_out(args.out, args.command)
        man = RunManifest(args.command, cfg, seeds={"seed": cfg.get("seed", 0)})
        HANDLERS[args.command](cfg, out, man, args.jobs)
        man.write(out)
        print(out)
        return 0
    except MultiscaleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
