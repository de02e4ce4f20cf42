"""Run manifests: what a command read, wrote and was configured with."""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from ..io import atomic_write_text

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    started: str = field(default_factory=_now)
    finished: str | None = None
    argv: list = field(default_factory=lambda: list(sys.argv))

    def add_input(self, path):
        p = Path(path)
        self.inputs[str(p)] = sha256_file(p) if p.is_file() else None

    def collect_outputs(self, out_dir):
        out = Path(out_dir)
        self.outputs = {str(p.relative_to(out)): sha256_file(p)
                        for p in sorted(out.rglob("*")) if p.is_file() and p.name != MANIFEST_NAME}

    def write(self, out_dir):
        self.collect_outputs(out_dir)
        self.finished = _now()
        doc = {"manifest_version": MANIFEST_VERSION, "command": self.command, "config": self.config,
               "seeds": self.seeds, "inputs": self.inputs, "outputs": self.outputs,
               "started": self.started, "finished": self.finished, "argv": self.argv}
        atomic_write_text(Path(out_dir) / MANIFEST_NAME, json.dumps(doc, indent=2, sort_keys=True) + "\n")
