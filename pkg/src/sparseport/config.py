"""Flat ``key = value`` configuration files.

Blank lines and ``#`` comments are ignored. A run config must carry
``schema_version = 1``; every other key is a field of ``StrategyConfig``
and may be omitted to take its default. ``none`` clears optional fields
(``gamma``, ``start_date``, ``end_date``). Generator spec files use the
same syntax with ``SyntheticSpec`` field names.
"""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from sparseport._io import fmt_date, parse_date, write_atomic
from sparseport.marketdata import SyntheticSpec
from sparseport.pipeline import SCHEMA_VERSION, StrategyConfig

TRUE_WORDS = ("1", "true", "yes", "on")
FALSE_WORDS = ("0", "false", "no", "off")


class ConfigError(ValueError):
    pass


def parse_key_values(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source} line {lineno}: expected 'key = value'")
        if key in values:
            raise ConfigError(f"{source} line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def read_key_values(path: str | Path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror or exc})") from None
    return parse_key_values(text, str(path))


def _convert(key: str, kind: str, raw: str):
    optional = "None" in kind
    if optional and raw.lower() == "none":
        return None
    base = kind.replace("| None", "").strip()
    try:
        if base == "bool":
            low = raw.lower()
            if low in TRUE_WORDS:
                return True
            if low in FALSE_WORDS:
                return False
            raise ValueError
        if base == "int":
            return int(raw)
        if base == "float":
            return float(raw)
        if base == "date":
            return parse_date(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r} (expected {base})") from None


def config_from_mapping(values: dict[str, str]) -> StrategyConfig:
    values = dict(values)
    version = values.pop("schema_version", None)
    if version is None:
        raise ConfigError("missing schema_version")
    if version != str(SCHEMA_VERSION):
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    kinds = {f.name: str(f.type) for f in fields(StrategyConfig)}
    kwargs = {}
    for key, raw in values.items():
        if key not in kinds:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[key] = _convert(key, kinds[key], raw)
    try:
        return StrategyConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> StrategyConfig:
    try:
        return config_from_mapping(read_key_values(path))
    except ConfigError as exc:
        if str(path) in str(exc):
            raise
        raise ConfigError(f"{path}: {exc}") from None


def config_text(config: StrategyConfig) -> str:
    lines = [f"schema_version = {SCHEMA_VERSION}"]
    for f in fields(StrategyConfig):
        v = getattr(config, f.name)
        if v is None:
            text = "none"
        elif isinstance(v, bool):
            text = "true" if v else "false"
        elif hasattr(v, "isoformat"):
            text = fmt_date(v)
        else:
            text = repr(v) if isinstance(v, float) else str(v)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def write_config(config: StrategyConfig, path: str | Path) -> None:
    write_atomic(path, config_text(config))


def load_synthetic_spec(path: str | Path) -> SyntheticSpec:
    values = read_key_values(path)
    try:
        return SyntheticSpec.from_mapping(values)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
