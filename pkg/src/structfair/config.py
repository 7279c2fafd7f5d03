"""Run configuration: defaults, ``key = value`` files, env and CLI overrides.

Precedence, lowest to highest: built-in defaults, config file, environment
variables (``STRUCTFAIR_<FIELD>``), command-line flags.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path

ENV_PREFIX = "STRUCTFAIR_"


@dataclass(frozen=True)
class RunConfig:
    dataset: str = ""
    dataset_name: str = ""
    model: str = "sfairgnn"
    centrality: str = "closeness"
    threshold_space: str = "normalized"
    line: float = 0.5
    hops: int = 3
    within_hops: bool = False
    fusion: str = "max"
    layers: int = 2
    embed_dim: int = 64
    hidden: int = 64
    dropout: float = 0.5
    epochs: int = 200
    lr: float = 0.005
    weight_decay: float = 0.0
    seed: int = 0
    split: float = 0.9
    bins: int = 10
    min_count: int = 5
    out: str = "runs"

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def lines(self) -> list[str]:
        """The resolved config as ``key = value`` lines, in field order."""
        return [f"{f.name} = {_render(getattr(self, f.name))}" for f in fields(self)]

    def comment_block(self) -> str:
        return "".join(f"# {line}\n" for line in self.lines())


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(name: str, raw: str):
    types = {f.name: f.type for f in fields(RunConfig)}
    if name not in types:
        raise KeyError(f"unknown config key {name!r}")
    kind = types[name]
    raw = raw.strip()
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: not a boolean: {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        out[key.strip()] = _coerce(key.strip(), value)
    return out


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for f in fields(RunConfig):
        key = ENV_PREFIX + f.name.upper()
        if key in environ:
            out[f.name] = _coerce(f.name, environ[key])
    return out


def resolve(config_file=None, cli: dict | None = None, environ=None, base: dict | None = None) -> RunConfig:
    """Merge ``base`` < config file < environment < ``cli`` (``None`` = unset)."""
    values = dict(base or {})
    if config_file:
        values.update(parse_config_text(Path(config_file).read_text(encoding="utf-8")))
    values.update(env_overrides(environ))
    values.update({k: v for k, v in (cli or {}).items() if v is not None})
    return RunConfig(**values)


def from_lines(lines) -> RunConfig:
    """Inverse of :meth:`RunConfig.lines` (ignores unknown keys)."""
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for line in lines:
        key, _, value = line.partition(" = ")
        if key in known:
            values[key] = _coerce(key, value)
    return RunConfig(**values)
