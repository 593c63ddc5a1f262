"""
Output writers shared by the command handlers.

JSON is written with sorted keys and non-finite floats as null; CSV floats
use repr so they round-trip exactly. Every file written through a RunContext
is registered with its SHA-256 digest for the manifest.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np
from pydantic import BaseModel

from rdsync.core.models import ExperimentConfig
from rdsync.vectorfield.field import DriftField


def to_jsonable(obj: Any) -> Any:
    if isinstance(obj, BaseModel):
        return to_jsonable(obj.model_dump(mode="python"))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if hasattr(obj, "value") and not isinstance(obj, (str, int)):
        return obj.value
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _cell(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


@dataclass
class RunContext:
    config: ExperimentConfig
    field: DriftField | None
    seeds: List[int]
    out_dir: Path
    n_workers: int
    config_hash: str
    outputs: Dict[str, str] = field(default_factory=dict)
    seed_failures: Dict[str, str] = field(default_factory=dict)
    suite_failed: bool = False

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def register(self, path: Path) -> Path:
        self.outputs[path.relative_to(self.out_dir).as_posix()] = file_digest(path)
        return path

    def write_json(self, name: str, payload: Any) -> Path:
        p = self.path(name)
        p.write_text(dumps(payload), encoding="utf-8")
        return self.register(p)

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text, encoding="utf-8")
        return self.register(p)

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        p = self.path(name)
        with p.open("w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(list(header))
            for row in rows:
                w.writerow([_cell(v) for v in row])
        return self.register(p)
