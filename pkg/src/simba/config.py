"""Flat ``key = value`` config files mapped onto dataclass configs."""

from __future__ import annotations

from dataclasses import MISSING, fields
from pathlib import Path

from .errors import ConfigurationError

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw string values; ``#`` starts a comment, blank lines are skipped."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigurationError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    return parse_config_text(path.read_text(), str(path))


def _coerce(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if default is None or isinstance(default, tuple):
            if raw.lower() in ("none", ""):
                return None
            if "," in raw or isinstance(default, tuple):
                return tuple(float(v) for v in raw.split(",") if v.strip())
            try:
                return int(raw)
            except ValueError:
                return float(raw)
        return raw
    except ValueError:
        raise ConfigurationError(f"config key {key!r}: cannot parse {raw!r}") from None


def build(cls, values: dict[str, str], exclude: tuple[str, ...] = (), base=None, **fixed):
    """Instantiate dataclass ``cls`` from raw strings; unknown keys are rejected by name.

    Fields not given fall back to ``base`` (an instance of ``cls``) when
    provided, else to the dataclass defaults.
    """
    allowed = {f.name: f for f in fields(cls) if f.name not in exclude}
    kwargs = {f.name: getattr(base, f.name) for f in fields(cls)} if base is not None else {}
    for key, raw in values.items():
        if key not in allowed:
            raise ConfigurationError(f"unknown config key {key!r} (allowed: {', '.join(sorted(allowed))})")
        f = allowed[key]
        default = f.default if f.default is not MISSING else None
        kwargs[key] = _coerce(key, raw, default)
    kwargs.update(fixed)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None


def split_keys(values: dict[str, str], *groups) -> list[dict[str, str]]:
    """Partition ``values`` among key groups; keys in no group raise by name."""
    parts: list[dict[str, str]] = [{} for _ in groups]
    for key, raw in values.items():
        for part, group in zip(parts, groups):
            if key in group:
                part[key] = raw
                break
        else:
            allowed = sorted(set().union(*groups))
            raise ConfigurationError(f"unknown config key {key!r} (allowed: {', '.join(allowed)})")
    return parts


def dump_config(obj) -> str:
    lines = []
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, tuple):
            v = ",".join(repr(x) for x in v)
        elif v is None:
            v = "none"
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
