"""
Experiment configuration: INI files with sections, overridable from the command line.

Sections are ``[experiment]`` (scenario, seed, trials, ...) and any number
of parameter sections (``[protocol]``, ``[attack]``, ...); all keys land in
one flat parameter namespace checked against the scenario's schema.
Errors name the file, line and field.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Any

from ..errors import ConfigError


@dataclass(frozen=True)
class Param:
    kind: type
    default: Any
    reference: str = ""


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def coerce(kind: type, text):
    if not isinstance(text, str):
        return kind(text)
    if kind is bool:
        return _bool(text)
    if kind is int:
        return int(float(text)) if "e" in text.lower() else int(text)
    return kind(text)


@dataclass
class ExperimentConfig:
    scenario: str
    seed: int
    params: dict[str, Any] = field(default_factory=dict)
    source: str = "<cli>"

    @property
    def trials(self) -> int:
        return int(self.params.get("trials", 1))


@dataclass
class RawConfig:
    """Key-value pairs read from a file, with the line each came from."""

    values: dict[str, str] = field(default_factory=dict)
    lines: dict[str, int] = field(default_factory=dict)
    path: str = "<cli>"

    def where(self, key: str) -> str:
        return f"{self.path}:{self.lines[key]}" if key in self.lines else self.path


def read_config_file(path: str) -> RawConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        parser.read_string(text, source=path)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    except configparser.ParsingError as exc:
        line, bad = exc.errors[0]
        raise ConfigError(f"{path}:{line}: cannot parse {bad.strip()!r}") from None
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        where = f"{path}:{line}" if line else path
        raise ConfigError(f"{where}: {str(exc).splitlines()[0]}") from None

    raw = RawConfig(path=path)
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
        elif section and "=" in stripped and not stripped.startswith(("#", ";")):
            raw.lines.setdefault(stripped.split("=", 1)[0].strip(), lineno)
    for sec in parser.sections():
        for key, value in parser.items(sec):
            if key in raw.values:
                raise ConfigError(f"{raw.where(key)}: field {key!r} set in more than one section")
            raw.values[key] = value
    return raw


def build_config(schemas: dict[str, dict[str, Param]], raw: RawConfig | None, overrides: dict[str, str],
                 scenario: str | None = None) -> ExperimentConfig:
    """Merge file values and overrides, then validate against the scenario schema."""
    raw = raw if raw is not None else RawConfig()
    merged = dict(raw.values)
    merged.update(overrides)
    scenario = scenario or merged.pop("scenario", None)
    merged.pop("scenario", None)
    if scenario is None:
        raise ConfigError(f"{raw.path}: no scenario given")
    if scenario not in schemas:
        raise ConfigError(f"{raw.where('scenario')}: unknown scenario {scenario!r}; "
                          f"expected one of {', '.join(sorted(schemas))}")
    if "seed" not in merged:
        raise ConfigError(f"{raw.path}: field 'seed' is required")
    schema = schemas[scenario]
    params = {k: p.default for k, p in schema.items()}
    seed = None
    for key, text in merged.items():
        where = "command line" if key in overrides else raw.where(key)
        if key == "seed":
            try:
                seed = coerce(int, text)
            except ValueError:
                raise ConfigError(f"{where}: field 'seed': expected an integer, got {text!r}") from None
            if not 0 <= seed < 1 << 64:
                raise ConfigError(f"{where}: field 'seed' must be a 64-bit unsigned integer")
            continue
        if key not in schema:
            raise ConfigError(f"{where}: unknown field {key!r} for scenario {scenario!r}")
        kind = schema[key].kind
        try:
            params[key] = coerce(kind, text)
        except (ValueError, TypeError):
            raise ConfigError(f"{where}: field {key!r}: expected {kind.__name__}, got {text!r}") from None
    if "trials" in params and params["trials"] < 1:
        raise ConfigError(f"{raw.where('trials')}: field 'trials' must be at least 1")
    return ExperimentConfig(scenario, seed, params, raw.path)
