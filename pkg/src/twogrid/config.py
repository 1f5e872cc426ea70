"""Flat ``key=value`` configuration files and run manifests."""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import sys
from pathlib import Path

from .errors import ArgumentError

OUTPUT_ROOT_ENV = "TWOGRID_OUT"
MANIFEST_NAME = "manifest.json"


def parse_value(text: str):
    """Parse ``text`` as None/bool/int/float, a comma-separated tuple, or a string."""
    text = text.strip()
    low = text.lower()
    if low in ("none", "null", ""):
        return None
    if low in ("true", "false"):
        return low == "true"
    if "," in text:
        return tuple(parse_value(p) for p in text.split(",") if p.strip())
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


def parse_config(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ArgumentError(f"config line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise ArgumentError(f"config line {lineno}: empty key")
        out[key] = parse_value(value)
    return out


def read_config(path) -> dict:
    return parse_config(Path(path).read_text())


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def default_run_dir(command: str) -> Path:
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    return output_root() / f"{command}-{stamp}"


def tool_version() -> str:
    from . import __version__
    return __version__


def write_manifest(directory, argv, config: dict, seed) -> Path:
    """Record how a run was produced; call before writing any other output."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command_line": " ".join(argv),
        "argv": list(argv),
        "config": json.loads(json.dumps(config, default=str)),
        "config_hash": config_hash(config),
        "seed": seed,
        "started": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "finished": None,
        "tool_version": tool_version(),
        "python": sys.version.split()[0],
    }
    path = directory / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def finish_manifest(directory) -> None:
    path = Path(directory) / MANIFEST_NAME
    manifest = json.loads(path.read_text())
    manifest["finished"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))


def read_manifest(directory) -> dict:
    return json.loads((Path(directory) / MANIFEST_NAME).read_text())
