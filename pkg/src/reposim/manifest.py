"""Run manifests: every CLI command leaves a JSON record of its inputs,
configuration hash, seed, wall time, and peak memory, so any output can be
traced back to what produced it."""

from __future__ import annotations

import hashlib
import json
import resource
import time

from . import __version__


def config_hash(config: dict) -> str:
    """Stable short hash of a JSON-serialisable configuration."""
    canon = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def peak_rss_mb() -> float:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


class ManifestWriter:
    """Collects run facts and writes them next to the command output."""

    def __init__(self, command: str, config: dict, seed: int | None = None):
        self.command = command
        self.config = config
        self.seed = seed
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.extra: dict = {}
        self._t0 = time.monotonic()

    def add_input(self, path) -> None:
        self.inputs[str(path)] = file_digest(path)

    def add_output(self, path) -> None:
        self.outputs[str(path)] = file_digest(path)

    def write(self, path) -> dict:
        payload = {
            "command": self.command,
            "tool_version": __version__,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_time_seconds": round(time.monotonic() - self._t0, 3),
            "peak_rss_mb": round(peak_rss_mb(), 1),
        }
        payload.update(self.extra)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return payload
