"""Versioned model checkpoints in the deterministic container format."""
from __future__ import annotations

from .. import container
from ..errors import ConfigMismatchError, IntegrityError
from .mlp import MLP
from .model import RNOConfig, RNOModel
from .normalizer import Normalizer

MAGIC = b"MSRNOCK\n"
VERSION = 1


def save_model(model: RNOModel, path):
    meta = {
        "config": model.config.to_dict(),
        "normalizer": model.normalizer.to_dict() if model.normalizer else None,
        "metadata": model.metadata,
        "xi0": model.xi0.tolist(),
    }
    arrays = {"theta_f": model.f.params}
    if model.g is not None:
        arrays["theta_g"] = model.g.params
    container.write(path, "rno-checkpoint", VERSION, meta, arrays, MAGIC)


def load_model(path, expect_k: int | None = None) -> RNOModel:
    header, arrays = container.read(path, MAGIC)
    if header.get("kind") != "rno-checkpoint":
        raise IntegrityError(f"{path} is not a model checkpoint")
    if header.get("version") != VERSION:
        raise ConfigMismatchError(f"checkpoint version {header.get('version')} != supported {VERSION}")
    meta = header["meta"]
    cfg = RNOConfig(**meta["config"])
    if expect_k is not None and cfg.k != expect_k:
        raise ConfigMismatchError(f"checkpoint has k = {cfg.k} internal variables, expected {expect_k}")
    try:
        f = MLP(cfg.input_dim + cfg.k, cfg.output_dim, cfg.hidden_layers, cfg.width, cfg.activation,
                params=arrays["theta_f"])
        g = None
        if cfg.k:
            g = MLP(cfg.input_dim + cfg.k, cfg.k, cfg.hidden_layers, cfg.width, cfg.activation,
                    params=arrays["theta_g"])
    except (KeyError, ValueError) as exc:
        raise IntegrityError(f"checkpoint parameters inconsistent with its config: {exc}") from exc
    nz = Normalizer.from_dict(meta["normalizer"]) if meta.get("normalizer") else None
    return RNOModel(cfg, f, g, nz, meta.get("xi0"), meta.get("metadata", {}))
