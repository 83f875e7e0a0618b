"""Delimiter-separated data files, config parsing, and run manifests.

All output files use a comma delimiter with a single header row. Floats
are written with repr (shortest round-trip form), so identical inputs
produce byte-identical files.
"""

from __future__ import annotations

import importlib.resources
from pathlib import Path

import numpy as np

from .plant import PlantParams

CONFIG_KEYS = ("L1", "L2", "C1", "C2", "R1", "R2", "k", "Vg", "Vo", "fs")


class ConfigError(ValueError):
    """Malformed or unreadable configuration file."""


def format_value(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    try:
        return repr(float(v))
    except (TypeError, ValueError):
        return str(v)


def write_rows(path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_manifest(out_path, resolved: dict) -> Path:
    """Write ``<out>.manifest`` with every resolved parameter, sorted."""
    path = Path(str(out_path) + ".manifest")
    lines = [f"{key} = {format_value(resolved[key])}" for key in sorted(resolved)]
    path.write_text("\n".join(lines) + "\n")
    return path


def default_config_text() -> str:
    return (importlib.resources.files("tsepdm") / "data" / "prototype.cfg").read_text()


def parse_config_text(text: str) -> dict[str, float]:
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'symbol = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown symbol {key!r} "
                              f"(expected one of {', '.join(CONFIG_KEYS)})")
        try:
            values[key] = float(val.strip())
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {val.strip()!r}") from exc
    return values


def params_from_config(path: str | None = None, **overrides) -> PlantParams:
    """Build plant parameters from a key-value config file.

    With no path, the packaged defaults are used. Keyword overrides are
    applied on top (e.g. ``k=0.13`` for a detuned sweep).
    """
    if path is None:
        text = default_config_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values = parse_config_text(text)
    values.update(overrides)
    try:
        return PlantParams(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid parameters: {exc}") from exc
