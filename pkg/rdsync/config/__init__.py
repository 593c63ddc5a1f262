from rdsync.config.loader import (
    apply_overrides,
    build_config,
    config_hash,
    default_workers,
    example_path,
    load_config,
    read_document,
    validate_document,
)

__all__ = [
    "apply_overrides",
    "build_config",
    "config_hash",
    "default_workers",
    "example_path",
    "load_config",
    "read_document",
    "validate_document",
]
