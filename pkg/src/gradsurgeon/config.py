"""Line-oriented key = value experiment configuration.

The documented key list is exactly the field set of SurgeryConfig; values are
coerced to the declared field type. Blank lines and # comments are ignored.
The canonical text rendering (sorted keys, repr'd floats) feeds the config
hash so identical effective configs hash identically regardless of source
formatting.
"""

from __future__ import annotations

import dataclasses
import hashlib

from .errors import ValidationError
from .trainer import SurgeryConfig, config_from_dict

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(SurgeryConfig)}


def _coerce(key: str, raw: str, where: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
        return raw
    except ValueError:
        raise ValidationError(f"{where}: key '{key}' expects {kind}, got {raw!r}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse key = value lines into a typed dict keyed by SurgeryConfig fields."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        where = f"{source}:{lineno}"
        if "=" not in stripped:
            raise ValidationError(f"{where}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _FIELD_TYPES:
            raise ValidationError(f"{where}: unknown config key '{key}'")
        if key in values:
            raise ValidationError(f"{where}: duplicate config key '{key}'")
        values[key] = _coerce(key, raw, where)
    return values


def load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from None
    return parse_config_text(text, source=path)


def build_config(file_values: dict | None = None, **overrides) -> SurgeryConfig:
    """Defaults, then config-file values, then non-None flag overrides."""
    merged = dict(file_values or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(merged)


def config_to_text(config: SurgeryConfig) -> str:
    lines = []
    for name in sorted(_FIELD_TYPES):
        value = getattr(config, name)
        lines.append(f"{name} = {value!r}" if isinstance(value, float) else f"{name} = {value}")
    return "\n".join(lines) + "\n"


def config_hash(config: SurgeryConfig) -> str:
    return hashlib.sha256(config_to_text(config).encode("utf-8")).hexdigest()
