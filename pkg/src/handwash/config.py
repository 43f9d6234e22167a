"""Line-oriented ``key = value`` configuration files.

Keys may be dotted (``forest.n_trees = 100``); ``#`` starts a comment.
Values stay strings until a consumer converts them.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Mapping


class ConfigError(ValueError):
    pass


def parse_config(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        out[key] = value.strip()
    return out


def load_config(path: str | Path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def format_config(values: Mapping[str, object]) -> str:
    return "".join(f"{k} = {values[k]}\n" for k in sorted(values))


def config_hash(values: Mapping[str, object]) -> str:
    """Short stable digest of the canonical ``key = value`` rendering."""
    return hashlib.sha256(format_config(values).encode()).hexdigest()[:16]


def section(values: Mapping[str, str], prefix: str) -> dict[str, str]:
    """Entries under ``prefix.`` with the prefix stripped."""
    p = prefix + "."
    return {k[len(p):]: v for k, v in values.items() if k.startswith(p)}


def as_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def as_float_list(value: str) -> list[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"not a number list: {value!r}") from None


def as_str_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]
