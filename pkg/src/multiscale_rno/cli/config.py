"""YAML configuration loading with line-aware schema validation."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..errors import ConfigError

SCHEMA_VERSION = 1


class LineDict(dict):
    """dict that remembers the source line of itself and of each key."""

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.line = None
        self.lines = {}


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    loader.flatten_mapping(node)
    out = LineDict()
    out.line = node.start_mark.line + 1
    for k_node, v_node in node.value:
        key = loader.construct_object(k_node, deep=True)
        if key in out:
            exc = ConfigError(f"duplicate key {key!r}")
            exc.line = k_node.start_mark.line + 1
            raise exc
        out[key] = loader.construct_object(v_node, deep=True)
        out.lines[key] = k_node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def load_yaml(path):
    text = Path(path).read_text()
    try:
        data = yaml.load(text, Loader=_Loader)
    except ConfigError as exc:
        raise ConfigError(f"{path}:{getattr(exc, 'line', '?')}: {exc}") from exc
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else "?"
        raise ConfigError(f"{path}:{line}: invalid YAML: {exc.problem}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


# --------------------------------------------------------------------------
# schema
# --------------------------------------------------------------------------

@dataclass
class F:
    """One schema field."""

    types: tuple
    required: bool = False
    default: object = None
    schema: dict | None = None       # nested mapping schema
    choices: tuple | None = None
    open: bool = False               # nested mapping accepts unknown keys
    has_default: bool = field(default=False, init=False)

    def __post_init__(self):
        self.has_default = self.default is not None


NUM = (int, float)


def _typename(types):
    names = {int: "integer", float: "number", str: "string", bool: "boolean", list: "list", dict: "mapping"}
    return " or ".join(names.get(t, t.__name__) for t in types)


def validate(data, schema: dict, source="config", path="", open_=False):
    """Check ``data`` against ``schema``; returns a plain dict with defaults."""
    line = getattr(data, "line", None)
    where = f"{source}:{line}" if line else source
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: {path or 'config'} must be a mapping")
    out = {}
    for key, spec in schema.items():
        name = f"{path}.{key}" if path else key
        if key not in data:
            if spec.required:
                raise ConfigError(f"{where}: missing required field {name!r}")
            if spec.has_default:
                out[key] = copy.deepcopy(spec.default)
            continue
        val = data[key]
        kl = data.lines.get(key, line) if isinstance(data, LineDict) else line
        at = f"{source}:{kl}" if kl else source
        if isinstance(val, bool) and bool not in spec.types:
            raise ConfigError(f"{at}: field {name!r} must be {_typename(spec.types)}, got boolean")
        if not isinstance(val, spec.types):
            raise ConfigError(f"{at}: field {name!r} must be {_typename(spec.types)}, "
                              f"got {type(val).__name__}")
        if spec.choices is not None and val not in spec.choices:
            raise ConfigError(f"{at}: field {name!r} must be one of {list(spec.choices)}, got {val!r}")
        if spec.schema is not None and isinstance(val, dict):
            val = validate(val, spec.schema, source, name, spec.open)
        out[key] = _plain(val)
    if not open_:
        extra = [k for k in data if k not in schema]
        if extra:
            k = extra[0]
            kl = data.lines.get(k, line) if isinstance(data, LineDict) else line
            raise ConfigError(f"{source}:{kl}: unknown field {(path + '.' if path else '') + str(k)!r}")
    else:
        for k in data:
            if k not in schema:
                out[k] = _plain(data[k])
    return out


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_plain(x) for x in v]
    return v


KINETICS = {"c_eq": F(NUM), "k_r": F(NUM), "m": F(NUM)}
GRID = {"resolution": F((int,), required=True), "primitives": F((list,)), "phi": F((list,))}
CELL = {"pe": F(NUM), "da": F(NUM), "nu": F(NUM), "cfl": F(NUM), "kinetics": F((dict,), schema=KINETICS)}
SAMPLER = {"T": F(NUM), "M": F((int,)), "c_max": F(NUM), "v_max": F(NUM), "c0_range": F((list,)),
           "steps": F((int,)), "seed": F((int,))}
TRAJECTORY = {
    "type": F((str,), required=True, choices=("constant", "knots", "random")),
    "c0": F((int, float, list)), "v0": F((list,)), "T": F(NUM), "steps": F((int,)),
    "times": F((list,)), "seed": F((int,)), "sampler": F((dict,), schema=SAMPLER),
}
MODEL = {"k": F((int,)), "hidden_layers": F((int,)), "width": F((int,)),
         "activation": F((str,), choices=("selu", "tanh", "linear"))}
TRAINING = {"epochs": F((int,)), "lr": F(NUM), "beta1": F(NUM), "beta2": F(NUM), "eps": F(NUM),
            "batch_size": F((int,)), "lr_decay": F((str,), choices=("none", "cosine", "step")),
            "lr_min_factor": F(NUM), "seed": F((int,)), "log_every": F((int,))}
NORMALIZER = {"grouping": F((str,), choices=("component", "quantity")), "log_k": F((bool,))}
SPLIT = {"test_fraction": F(NUM), "seed": F((int,))}

_BASE = {"schema_version": F((int,), required=True), "seed": F((int,))}

SCHEMAS = {
    "cell": {**_BASE, "grid": F((dict,), required=True, schema=GRID), "cell": F((dict,), schema=CELL),
             "trajectory": F((dict,), required=True, schema=TRAJECTORY),
             "snapshot_every": F((int,), default=0)},
    "gen-data": {**_BASE, "grid": F((dict,), schema=GRID), "cell": F((dict,), schema=CELL),
                 "sampler": F((dict,), schema=SAMPLER), "n": F((int,), required=True),
                 "max_failure_rate": F(NUM, default=0.1)},
    "train": {**_BASE, "dataset": F((str,), required=True), "model": F((dict,), schema=MODEL),
              "training": F((dict,), schema=TRAINING), "normalizer": F((dict,), schema=NORMALIZER),
              "split": F((dict,), schema=SPLIT), "init_seed": F((int,))},
    "eval": {**_BASE, "dataset": F((str,), required=True), "checkpoints": F((list,), required=True),
             "split": F((dict,), schema=SPLIT), "dt_sweep": F((bool,), default=False),
             "dt_factors": F((list,), default=[0.25, 0.5, 1.0, 2.0]), "sweep_index": F((int,), default=0)},
    "simulate": {**_BASE, "scenario": F((str, dict), required=True), "overrides": F((dict,), default={}),
                 "checkpoint": F((str,), required=True)},
    "validate": {**_BASE, "run": F((str,), required=True), "checkpoint": F((str,), required=True),
                 "grid": F((dict,), schema=GRID), "cell": F((dict,), schema=CELL),
                 "monitors": F((list,))},
    "export": {**_BASE, "kind": F((str,), required=True, choices=("dataset", "checkpoint", "grid", "run")),
               "source": F((str,)), "grid": F((dict,), schema=GRID)},
}


def load_config(path, command: str):
    """Load and validate a command config. A run manifest is accepted too:
    its stored config is replayed when the command matches."""
    data = load_yaml(path)
    if "manifest_version" in data:
        if data.get("command") != command:
            raise ConfigError(f"{path}: manifest was written by {data.get('command')!r}, not {command!r}")
        data = data["config"]
    version = data.get("schema_version")
    if version is not None and version != SCHEMA_VERSION:
        line = data.lines.get("schema_version") if isinstance(data, LineDict) else None
        raise ConfigError(f"{path}:{line}: unsupported schema_version {version} (expected {SCHEMA_VERSION})")
    return validate(data, SCHEMAS[command], str(path))
