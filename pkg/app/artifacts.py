from __future__ import annotations

import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import scipy

from . import __version__
from .errors import DataError


MANIFEST_NAME = "manifest.json"


def build_identifier() -> str:
    return f"rdlab {__version__}; python {platform.python_version()}; numpy {np.__version__}; scipy {scipy.__version__}; pandas {pd.__version__}"


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(path: str | Path, payload) -> Path:
    """Non-finite floats become null."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(_jsonable(payload), indent=2, ensure_ascii=False, sort_keys=False) + "\n", encoding="utf-8")
    return p


def write_csv(frame: pd.DataFrame, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(p, index=False, lineterminator="\n")
    return p


def read_table(path: str | Path, required: list[str], what: str = "arquivo") -> pd.DataFrame:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{what} não encontrado: {p}")
    try:
        frame = pd.read_csv(p, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"{what} ilegível ({p}): {exc}") from exc
    missing = [col for col in required if col not in frame.columns]
    if missing:
        raise DataError(f"Coluna(s) ausente(s) em {p}: {', '.join(missing)}")
    return frame


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    build: str = field(default_factory=build_identifier)
    duration_seconds: float = 0.0
    started: float = field(default_factory=time.perf_counter, repr=False)

    def add_output(self, path: str | Path) -> None:
        self.outputs.append(str(path))

    def write(self, out_dir: str | Path) -> Path:
        self.duration_seconds = round(time.perf_counter() - self.started, 3)
        payload = asdict(self)
        payload.pop("started")
        return write_json(Path(out_dir) / MANIFEST_NAME, payload)
