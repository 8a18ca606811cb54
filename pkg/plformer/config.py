"""Flat key = value configuration files, MIT License"""


import dataclasses
import typing

from plformer.errors import ValidationError


def _normalize_key(key):
    return key.strip().replace("-", "_")


def read_flat_config(path):
    """Parse a flat configuration file.

    Args:
    - path: a file with one `key = value` pair per line; `#` starts a
        comment and blank lines are ignored.

    Returns:
    - values: a dict mapping normalized keys (dashes become underscores)
        to the raw string values in file order.
    """
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(
                    "{}:{}: expected 'key = value', got {!r}".format(
                        path, number, line))
            key, value = line.split("=", 1)
            key = _normalize_key(key)
            if not key:
                raise ValidationError("{}:{}: empty key".format(path, number))
            values[key] = value.strip()
    return values


def _coerce(name, raw, kind):
    if not isinstance(raw, str):
        return raw
    origin = typing.get_origin(kind)
    if origin is tuple:
        items = [item for item in raw.replace(",", " ").split() if item]
        inner = typing.get_args(kind)
        inner = inner[0] if inner else float
        return tuple(_coerce(name, item, inner) for item in items)
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ValidationError(
            "config key {!r}: cannot read {!r} as {}".format(
                name, raw, kind.__name__))
    return raw


def build_config(cls, values, strict=True):
    """Instantiate a config dataclass from string or typed values.

    Args:
    - cls: a dataclass type whose fields carry type annotations.
    - values: a dict of field values, strings are coerced to field types.
    - strict: if true, keys that are not fields of cls are an error.

    Returns:
    - config: an instance of cls, validated when cls defines validate().
    """
    hints = typing.get_type_hints(cls)
    names = {field.name for field in dataclasses.fields(cls)}
    unknown = set(values) - names
    if strict and unknown:
        raise ValidationError("unknown config key(s) for {}: {}".format(
            cls.__name__, ", ".join(sorted(unknown))))
    kwargs = {
        key: _coerce(key, value, hints[key])
        for key, value in values.items() if key in names}
    config = cls(**kwargs)
    if hasattr(config, "validate"):
        config.validate()
    return config


def merge_overrides(values, overrides):
    """Flags win over file values; None means the flag was not given."""
    merged = dict(values)
    for key, value in overrides.items():
        if value is not None:
            merged[_normalize_key(key)] = value
    return merged
