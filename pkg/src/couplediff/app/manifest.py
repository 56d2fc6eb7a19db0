"""Run manifests: what was run, on what, with which seed, and what came out."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

from .config import SCHEMA, RunConfig, parse_config, _render

MANIFEST_NAME = "manifest.json"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    inputs: dict = field(default_factory=dict)    # name -> sha256
    outputs: dict = field(default_factory=dict)   # relative file name -> sha256
    wall_clock_s: float = 0.0
    summary: dict = field(default_factory=dict)
    version: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> str:
        path = os.path.join(out_dir, MANIFEST_NAME)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))

    def comparable(self) -> dict:
        """Everything except the wall-clock time, which legitimately varies."""
        d = asdict(self)
        d.pop("wall_clock_s")
        return d

    def run_config(self) -> RunConfig:
        return config_from_snapshot(self.config)


def config_from_snapshot(snapshot: dict) -> RunConfig:
    """Rebuild a configuration from :meth:`RunConfig.snapshot` output."""
    lines = []
    for sec, kv in snapshot.items():
        if sec not in SCHEMA:
            continue
        lines.append(f"[{sec}]")
        for key, value in kv.items():
            if value is None:
                continue
            if isinstance(value, list):
                value = tuple(value)
            lines.append(f"{key} = {_render(value)}")
    return parse_config("\n".join(lines) + "\n")


def digest_outputs(out_dir, names) -> dict:
    return {name: sha256_file(os.path.join(out_dir, name)) for name in sorted(names)}
