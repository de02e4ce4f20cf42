"""Command-line pipeline: cell preview, data, training, evaluation, simulation."""
from .config import SCHEMA_VERSION, load_config
from .main import build_parser, run
from .manifest import RunManifest

__all__ = ["RunManifest", "SCHEMA_VERSION", "build_parser", "load_config", "run"]
