"""Key-value text configuration shared by checkpoints and experiment files.

Files are INI style, one section per config object::

    [model]
    stem_channels = 16
    k_list = 20, 15, 10

Values are parsed against the type of the field's default, and unknown
sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import dataclasses
from pathlib import Path
from typing import Any

from .errors import ConfigError


def format_value(value: Any) -> str:
    if isinstance(value, (tuple, list)):
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_value(text: str, template: Any, key: str) -> Any:
    text = text.strip()
    try:
        if isinstance(template, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(template, int):
            return int(text)
        if isinstance(template, float):
            return float(text)
        if isinstance(template, tuple):
            items = [t for t in (s.strip() for s in text.split(",")) if t]
            elem = template[0] if template else ""
            return tuple(parse_value(t, elem, key) for t in items)
        if template is None:
            return None if text.lower() in ("", "none") else text
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {type(template).__name__}") from None


def to_section(obj) -> dict[str, str]:
    return {f.name: format_value(getattr(obj, f.name)) for f in dataclasses.fields(obj)}


def from_section(cls, section: dict[str, str], where: str = ""):
    defaults = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(section) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where or cls.__name__}]: {', '.join(unknown)}")
    values = {k: parse_value(v, getattr(defaults, k), f"{where}.{k}") for k, v in section.items()}
    return dataclasses.replace(defaults, **values)


def dump_sections(sections: dict[str, Any]) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for name, obj in sections.items():
        parser[name] = to_section(obj) if dataclasses.is_dataclass(obj) else {k: format_value(v) for k, v in obj.items()}
    lines = []
    for name in parser.sections():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in parser[name].items())
        lines.append("")
    return "\n".join(lines)


def read_sections(text: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return {name: dict(parser[name]) for name in parser.sections()}


def read_config_file(path) -> dict[str, dict[str, str]]:
    return read_sections(Path(path).read_text())
