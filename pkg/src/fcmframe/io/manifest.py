"""Run manifests: input/output hashes, parameter echo, timings, tool version."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

__all__ = ["file_sha256", "build_manifest", "write_json", "canonical_json"]


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(obj, path):
    from .vtk import write_text

    return write_text(canonical_json(obj), path)


def build_manifest(command, inputs, parameters, outputs, timings):
    """Manifest dictionary; everything except ``timings`` is deterministic.

    ``inputs`` and ``outputs`` are iterables of paths, recorded by file name.
    """
    from .. import __version__

    return {
        "tool": "fcmframe",
        "version": __version__,
        "command": command,
        "inputs": {Path(p).name: file_sha256(p) for p in inputs},
        "parameters": parameters,
        "outputs": {Path(p).name: file_sha256(p) for p in sorted(outputs, key=str)},
        "timings": {k: round(float(v), 6) for k, v in sorted(timings.items())},
    }
