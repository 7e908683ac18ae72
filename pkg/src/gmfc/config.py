"""TOML config loading; unknown keys are rejected."""
from __future__ import annotations

import sys
from dataclasses import MISSING, fields

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", field="config") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}", field="config") from None


def check_keys(table: dict, allowed, section: str) -> None:
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(extra)}", field=f"{section}.{extra[0]}")


def require(table: dict, key: str, section: str):
    if key not in table:
        raise ConfigError(f"missing required field '{key}' in [{section}]", field=f"{section}.{key}")
    return table[key]


def _coerce(value, default, name):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean", field=name)
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer", field=name)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number", field=name)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string", field=name)
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name} must be a list", field=name)
        return tuple(value)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{name} must be a table", field=name)
        return dict(value)
    return value


def dataclass_from_table(cls, table: dict, section: str, **overrides):
    """Build ``cls`` from a TOML table, type-checking against field defaults."""
    known = {f.name: f for f in fields(cls)}
    check_keys(table, known, section)
    kwargs = {}
    for name, f in known.items():
        if f.default is not MISSING:
            default = f.default
        elif f.default_factory is not MISSING:
            default = f.default_factory()
        else:
            default = None
        if name in table:
            kwargs[name] = _coerce(table[name], default, f"{section}.{name}")
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return cls(**kwargs)
