"""TOML config loading and canonical hashing."""

from __future__ import annotations

import hashlib
import json
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w


class ConfigError(ValueError):
    pass


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def loads_toml(text: str) -> dict:
    return tomllib.loads(text)


def dumps_toml(data: dict) -> str:
    return tomli_w.dumps(data)


def config_hash(data) -> str:
    """Short hash of a JSON-able config, independent of key order."""
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
