"""Key-value text format shared by corpus manifests and experiment configs.

Grammar, one entry per line::

    # comment
    key = value
    section.key = value

Keys are dotted identifiers; a dot nests the key into a section, so
``channel.doppler_hz = 550`` becomes ``{"channel": {"doppler_hz": 550}}``.
Values are JSON literals (numbers, strings in double quotes, ``true``,
``false``, ``null``, lists, objects).  A bare word that is not valid JSON is
read as a string, so ``regime = mixed`` works.  Blank lines and lines
starting with ``#`` are ignored.  Repeating a key is an error.
"""
from __future__ import annotations

import json
import re

_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-]*(\.[A-Za-z_][A-Za-z0-9_\-]*)*$")


class ConfigError(ValueError):
    pass


def parse_kv(text: str) -> dict:
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not _KEY.match(key):
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            if not value or any(c in value for c in "[]{}\","):
                raise ConfigError(f"line {lineno}: cannot parse value {value!r}") from None
            parsed = value
        node = out
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"line {lineno}: {key!r} nests under a non-section key")
        if leaf in node:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        node[leaf] = parsed
    return out


def dump_kv(data: dict, prefix: str = "") -> str:
    """Inverse of :func:`parse_kv`; keys sorted so output is byte-stable."""
    lines = []
    for key in sorted(data):
        value = data[key]
        full = f"{prefix}{key}"
        if isinstance(value, dict) and value:
            lines.append(dump_kv(value, full + ".").rstrip("\n"))
        else:
            lines.append(f"{full} = {json.dumps(value, sort_keys=True)}")
    return "\n".join(lines) + "\n"


def load_kv(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return json.loads(text)
    return parse_kv(text)
