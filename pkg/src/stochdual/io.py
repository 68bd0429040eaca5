"""Config parsing, table writers and run manifests."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    """Bad or missing configuration; the message names the offending field."""


def artifact_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


# ---------------------------------------------------------------------------
# config


def load_config(path) -> dict:
    """Parse a TOML document into a plain dict.

    Raises
    ------
    ConfigError
        If the file is missing or does not parse; the parser message
        carries the line and column.
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config: file not found: {p}")
    try:
        with p.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config: {p}: {exc}") from None


# ---------------------------------------------------------------------------
# writers


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if hasattr(x, "__dataclass_fields__"):
        return _jsonable(asdict(x))
    return x


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def dumps_csv(rows: list[dict]) -> str:
    """CSV text of a list of flat dicts sharing the first row's keys."""
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = list(rows[0])
    w.writerow(keys)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in keys])
    return buf.getvalue()


def write_text(path, text: str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)
    return p


def write_table(out_dir, stem: str, rows: list[dict], fmt: str = "csv") -> Path:
    """Write ``rows`` as ``stem.csv`` or ``stem.json``."""
    if fmt == "csv":
        return write_text(Path(out_dir) / f"{stem}.csv", dumps_csv(rows))
    if fmt == "json":
        return write_text(Path(out_dir) / f"{stem}.json", dumps_json(rows))
    raise ConfigError(f"format: expected csv or json, got {fmt!r}")


def read_profile_csv(path):
    """Read a ``x, rho`` CSV into two arrays."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"profile: file not found: {p}")
    with p.open() as fh:
        rows = list(csv.reader(fh))
    head = [h.strip() for h in rows[0]]
    if head[:2] != ["x", "rho"]:
        raise ConfigError(f"profile: header must be 'x,rho', got {','.join(head)}")
    data = np.array([[float(v) for v in r[:2]] for r in rows[1:] if r], float)
    return data[:, 0], data[:, 1]


# ---------------------------------------------------------------------------
# manifests


@dataclass
class RunManifest:
    """Everything needed to rerun a command and get identical data files."""

    command: str
    argv: list
    config: dict
    seed: int
    threads: int
    version: str = field(default_factory=artifact_version)
    started: str = ""
    finished: str = ""
    outputs: list = field(default_factory=list)
    resolved: dict = field(default_factory=dict)
    host: dict = field(default_factory=lambda: {"python": platform.python_version(),
                                                "numpy": np.__version__})

    def start(self):
        self.started = _now()
        return self

    def finish(self, outputs):
        self.finished = _now()
        self.outputs = [os.fspath(p) for p in outputs]
        return self

    def write(self, out_dir) -> Path:
        return write_text(Path(out_dir) / "manifest.json", dumps_json(asdict(self)))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def load_manifest(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"manifest: file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest: {p}: {exc}") from None
