"""Run manifests: every artifact-producing command records how to reproduce it.

The manifest sits beside its output as <output>.manifest.json and carries the
command, the fully resolved configuration, seeds, input/output digests, the
tool version and the wall-clock duration.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path
from typing import Optional

from . import __version__

MANIFEST_FORMAT = "slicewarden-manifest/1"


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest_path(output: str | Path) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")


class ManifestTimer:
    """Collects inputs/outputs around a command run and writes the manifest."""

    def __init__(self, command: str, config: dict, seeds: Optional[dict] = None):
        self.command = command
        self.config = config
        self.seeds = seeds or {}
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self._start = time.monotonic()

    def add_input(self, path: str | Path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path: str | Path, digest: Optional[str] = None) -> None:
        self.outputs[str(path)] = digest if digest is not None else sha256_file(path)

    def write(self, beside: str | Path) -> Path:
        obj = {
            "format": MANIFEST_FORMAT,
            "version": __version__,
            "command": self.command,
            "config": self.config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_seconds": round(time.monotonic() - self._start, 3),
        }
        path = manifest_path(beside)
        path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")
        return path


def ensure_fresh(path: str | Path) -> None:
    """Outputs are write-once; refuse to clobber an existing file."""
    if Path(path).exists():
        raise FileExistsError(f"refusing to overwrite existing output: {path}")
