"""Flat key/value text documents.

One format is shared by config files, scenario ground-truth files and the
machine-readable benchmark output: UTF-8 text, one ``key = value`` pair per
line, ``#`` starts a comment, keys are dotted lowercase identifiers. Values
are stored as strings; typed accessors parse on read.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError

_TRUE = {"true", "yes", "1", "on"}
_FALSE = {"false", "no", "0", "off"}


def dumps(entries: dict) -> str:
    lines = []
    for key, value in entries.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        elif isinstance(value, (list, tuple)):
            value = ",".join(str(v).lower() if isinstance(v, bool) else str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value.strip()
    return entries


def write(path: str | Path, entries: dict) -> None:
    Path(path).write_text(dumps(entries), encoding="utf-8")


def read(path: str | Path) -> dict[str, str]:
    return loads(Path(path).read_text(encoding="utf-8"))


def get_int(entries: dict[str, str], key: str) -> int:
    try:
        return int(entries[key])
    except KeyError:
        raise ConfigError(f"missing key {key!r}") from None
    except ValueError:
        raise ConfigError(f"key {key!r}: expected integer, got {entries[key]!r}") from None


def get_float(entries: dict[str, str], key: str) -> float:
    try:
        return float(entries[key])
    except KeyError:
        raise ConfigError(f"missing key {key!r}") from None
    except ValueError:
        raise ConfigError(f"key {key!r}: expected number, got {entries[key]!r}") from None


def get_bool(entries: dict[str, str], key: str) -> bool:
    try:
        value = entries[key].lower()
    except KeyError:
        raise ConfigError(f"missing key {key!r}") from None
    if value in _TRUE:
        return True
    if value in _FALSE:
        return False
    raise ConfigError(f"key {key!r}: expected boolean, got {entries[key]!r}")


def get_str(entries: dict[str, str], key: str) -> str:
    try:
        return entries[key]
    except KeyError:
        raise ConfigError(f"missing key {key!r}") from None


def get_int_list(entries: dict[str, str], key: str) -> list[int]:
    raw = get_str(entries, key)
    if not raw:
        return []
    try:
        return [int(part) for part in raw.split(",")]
    except ValueError:
        raise ConfigError(f"key {key!r}: expected comma-separated integers, got {raw!r}") from None


def get_bool_list(entries: dict[str, str], key: str) -> list[bool]:
    raw = get_str(entries, key)
    if not raw:
        return []
    out = []
    for part in raw.split(","):
        part = part.strip().lower()
        if part in _TRUE:
            out.append(True)
        elif part in _FALSE:
            out.append(False)
        else:
            raise ConfigError(f"key {key!r}: expected comma-separated booleans, got {raw!r}")
    return out
