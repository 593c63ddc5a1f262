from __future__ import annotations

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import yaml
from dotenv import load_dotenv
from jsonschema import Draft202012Validator
from pydantic import ValidationError

from rdsync.core.errors import ConfigError
from rdsync.core.models import ExperimentConfig

logger = logging.getLogger(__name__)

SCHEMA_PATH = Path(__file__).resolve().parent / "experiment.schema.json"
EXAMPLES_DIR = Path(__file__).resolve().parent / "examples"
WORKERS_ENV = "RDSYNC_WORKERS"
# keys that do not change results
NON_SEMANTIC_KEYS = frozenset({"output_dir", "n_workers"})


def _load_schema() -> Dict[str, Any]:
    with open(SCHEMA_PATH, "r", encoding="utf-8") as f:
        return json.load(f)


def _dotted(path: Iterable[Any]) -> str:
    return ".".join(str(p) for p in path)


def default_workers() -> int:
    """RDSYNC_WORKERS (a .env file is honoured), else 1."""
    load_dotenv()
    raw = os.getenv(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError as e:
        raise ConfigError(f"{WORKERS_ENV}={raw!r} is not an integer", key_path="n_workers") from e
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1, got {n}", key_path="n_workers")
    return n


def read_document(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a YAML (or JSON) experiment document. A run manifest is accepted as
    well; its config snapshot is returned.
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "r", encoding="utf-8") as f:
            doc = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {p}: {e}") from e
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    if "config" in doc and "config_hash" in doc:
        logger.info("restoring config snapshot from manifest %s (hash %s)", p, doc["config_hash"])
        doc = doc["config"]
    return doc


def parse_override(item: str) -> Tuple[List[str], Any]:
    """'a.b.c=value' -> (['a', 'b', 'c'], value); the value is read as a YAML scalar or list."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key.path=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not key or any(not part for part in key.split(".")):
        raise ConfigError(f"override {item!r} has an empty key")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse override value {raw!r}: {e}", key_path=key) from e
    return key.split("."), value


def apply_overrides(doc: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    out = json.loads(json.dumps(doc))
    for item in overrides:
        keys, value = parse_override(item)
        node = out
        for i, k in enumerate(keys[:-1]):
            nxt = node.get(k)
            if nxt is None:
                nxt = node[k] = {}
            if not isinstance(nxt, dict):
                raise ConfigError(f"cannot set {'.'.join(keys)}: {_dotted(keys[: i + 1])} is not a mapping",
                                  key_path=_dotted(keys[: i + 1]))
            node = nxt
        node[keys[-1]] = value
    return out


def validate_document(doc: Dict[str, Any]) -> None:
    validator = Draft202012Validator(_load_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        first = errors[0]
        path = _dotted(first.absolute_path)
        if first.validator == "additionalProperties" and isinstance(first.instance, dict):
            allowed = set(first.schema.get("properties", {}))
            extra = sorted(set(first.instance) - allowed)
            if extra:
                path = _dotted(list(first.absolute_path) + [extra[0]])
        raise ConfigError(first.message, key_path=path)


def build_config(doc: Dict[str, Any]) -> ExperimentConfig:
    validate_document(doc)
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as e:
        err = e.errors()[0]
        raise ConfigError(err.get("msg", str(e)), key_path=_dotted(err.get("loc", ()))) from e


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Iterable[str] = (),
    base: Optional[Dict[str, Any]] = None,
) -> ExperimentConfig:
    doc: Dict[str, Any] = dict(base or {})
    if path is not None:
        doc.update(read_document(path))
    return build_config(apply_overrides(doc, overrides))


def semantic_dump(config: ExperimentConfig) -> Dict[str, Any]:
    return config.model_dump(mode="json", exclude=set(NON_SEMANTIC_KEYS))


def config_hash(config: ExperimentConfig) -> str:
    """First 16 hex chars of SHA-256 over the canonical JSON of the semantic keys."""
    canonical = json.dumps(semantic_dump(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def example_path(name: str) -> Path:
    p = EXAMPLES_DIR / (name if name.endswith(".yaml") else f"{name}.yaml")
    if not p.is_file():
        raise ConfigError(f"no bundled example named {name!r}")
    return p
