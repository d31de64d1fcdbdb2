"""Flat ``key = value`` configuration files for the world and the provider.

Keys are the field names of :class:`WorldConfig` and :class:`ProviderConfig`,
optionally prefixed with ``world.`` or ``provider.``; ``#`` starts a comment.
"""

from __future__ import annotations

import configparser
from dataclasses import fields
from pathlib import Path

from afford.errors import InvalidInputError
from afford.physics.config import WorldConfig
from afford.reasoner.core import ProviderConfig

_SECTION = "afford"
_WORLD_KEYS = {f.name for f in fields(WorldConfig)}
_PROVIDER_KEYS = {f.name: f for f in fields(ProviderConfig)}


def _provider_value(name: str, raw: str):
    kind = _PROVIDER_KEYS[name].type
    if "int" in kind:
        return int(raw)
    if "float" in kind:
        return float(raw)
    if raw.lower() in ("", "none", "null"):
        return None
    return raw


def parse_config(text: str, source: str = "<config>") -> tuple[WorldConfig, ProviderConfig]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(f"[{_SECTION}]\n{text}", source=source)
    except configparser.Error as exc:
        raise InvalidInputError(f"{source}: {exc}") from None
    world, provider = {}, {}
    for key, raw in parser.items(_SECTION):
        name = key.split(".", 1)[1] if key.startswith(("world.", "provider.")) else key
        try:
            if name in _WORLD_KEYS and not key.startswith("provider."):
                world[name] = raw
            elif name in _PROVIDER_KEYS and not key.startswith("world."):
                provider[name] = _provider_value(name, raw)
            else:
                raise InvalidInputError(f"{source}: unknown key {key!r}")
        except ValueError as exc:
            raise InvalidInputError(f"{source}: bad value for {key!r}: {exc}") from None
    try:
        return WorldConfig.from_mapping(world), ProviderConfig(**provider)
    except ValueError as exc:
        raise InvalidInputError(f"{source}: {exc}") from None


def load_config(path) -> tuple[WorldConfig, ProviderConfig]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def dump_config(world: WorldConfig, provider: ProviderConfig) -> str:
    lines = [f"world.{k} = {v}" for k, v in world.to_dict().items()]
    for f in fields(ProviderConfig):
        v = getattr(provider, f.name)
        lines.append(f"provider.{f.name} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"
