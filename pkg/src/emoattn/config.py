"""``key = value`` run configuration covering ModelConfig and TrainConfig.

Blank lines and ``#`` comments are ignored. Lists are comma separated
(``conv_widths = 3, 4, 5``); booleans are true/false/yes/no/1/0.
Unknown keys are an error.
"""
from __future__ import annotations

import dataclasses
import typing

from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _field_types(cls):
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


MODEL_KEYS = _field_types(ModelConfig)
TRAIN_KEYS = _field_types(TrainConfig)


def _convert(key, raw, typ):
    raw = raw.strip()
    if typ is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    if typing.get_origin(typ) is list:
        return [int(x) for x in raw.replace(" ", "").split(",") if x]
    return raw


def parse_config(text: str, source: str = "<config>") -> dict[str, object]:
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        typ = MODEL_KEYS.get(key) or TRAIN_KEYS.get(key)
        if typ is None:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, raw, typ)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return values


def build_configs(values: dict) -> tuple[ModelConfig, TrainConfig]:
    m = {k: v for k, v in values.items() if k in MODEL_KEYS}
    t = {k: v for k, v in values.items() if k in TRAIN_KEYS}
    try:
        return ModelConfig(**m), TrainConfig(**t)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> tuple[ModelConfig, TrainConfig]:
    with open(path, encoding="utf-8") as fh:
        return build_configs(parse_config(fh.read(), str(path)))


def render_config(model: ModelConfig, train: TrainConfig) -> str:
    """Inverse of :func:`load_config`."""
    lines = []
    for cfg in (model, train):
        for f in dataclasses.fields(cfg):
            v = getattr(cfg, f.name)
            if isinstance(v, list):
                v = ", ".join(map(str, v))
            elif isinstance(v, bool):
                v = str(v).lower()
            lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
