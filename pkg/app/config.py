"""Flat ``key=value`` run configuration with typed validation.

A file holds one pair per line; ``#`` starts a comment and blank lines are
ignored. Values are validated by the pydantic model of the command that reads
them, so errors name the key (and its line when it came from a file).
"""

from __future__ import annotations

import os
import re
from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import NamedTuple, TypeVar

from pydantic import BaseModel, ConfigDict, ValidationError

from .errors import ConfigError


_KEY_RE = re.compile(r"^[a-z][a-z0-9_]*$")
_TRUE_VALUES = {"1", "true", "yes", "y", "on", "sim"}

ModelT = TypeVar("ModelT", bound=BaseModel)


class LabModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ConfigEntry(NamedTuple):
    value: str
    origin: str  # "file:line" or "--set"


def env_flag(name: str, default: bool = False) -> bool:
    raw = os.getenv(name)
    if raw is None:
        return bool(default)
    return raw.strip().lower() in _TRUE_VALUES


def env_int(name: str, default: int | None) -> int | None:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        return int(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"Variável de ambiente {name} precisa ser inteira (recebido '{raw}').") from exc


def parse_key_values(text: str, source: str = "<config>") -> dict[str, ConfigEntry]:
    entries: dict[str, ConfigEntry] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: linha sem '=' (esperado chave=valor): '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not _KEY_RE.match(key):
            raise ConfigError(f"{source}:{lineno}: chave inválida '{key}' (use letras minúsculas, dígitos e _).")
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: chave '{key}' repetida (já definida em {entries[key].origin}).")
        if not value:
            raise ConfigError(f"{source}:{lineno}: chave '{key}' sem valor.")
        entries[key] = ConfigEntry(value, f"{source}:{lineno}")
    return entries


def load_config_file(path: str | os.PathLike | None) -> dict[str, ConfigEntry]:
    if path is None:
        return {}
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"Arquivo de configuração não encontrado: {p}") from exc
    return parse_key_values(text, source=str(p))


def apply_overrides(entries: Mapping[str, ConfigEntry], overrides: Iterable[str]) -> dict[str, ConfigEntry]:
    merged = dict(entries)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set espera chave=valor (recebido '{item}').")
        key, value = (part.strip() for part in item.split("=", 1))
        if not _KEY_RE.match(key):
            raise ConfigError(f"--set: chave inválida '{key}'.")
        merged[key] = ConfigEntry(value, "--set")
    return merged


def build_model(
    model: type[ModelT],
    entries: Mapping[str, ConfigEntry],
    defaults: Mapping | None = None,
    **fixed,
) -> ModelT:
    """Validate ``entries`` into ``model``.

    Precedence: ``defaults`` (a preset) < ``entries`` (file and --set) < ``fixed``
    (typed command-line flags; None means not given).
    """
    data = dict(defaults or {})
    data.update({key: entry.value for key, entry in entries.items()})
    data.update({key: value for key, value in fixed.items() if value is not None})
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        problems = []
        for err in exc.errors():
            key = ".".join(str(part) for part in err.get("loc", ())) or "(geral)"
            origin = entries.get(key).origin if key in entries else None
            where = f" [{origin}]" if origin else ""
            if err.get("type") == "extra_forbidden":
                problems.append(f"chave desconhecida '{key}'{where}")
            else:
                problems.append(f"chave '{key}'{where}: {err.get('msg')}")
        raise ConfigError(f"Configuração inválida ({model.__name__}): " + "; ".join(problems)) from exc


def split_list(value):
    """Comma-separated strings become lists; other values pass through."""
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value
