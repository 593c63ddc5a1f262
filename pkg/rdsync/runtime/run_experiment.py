from __future__ import annotations

import logging
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional, Union

from rdsync import __version__
from rdsync.config.loader import config_hash, default_workers
from rdsync.core.enums import ExitCode
from rdsync.core.models import ExperimentConfig, RunManifest
from rdsync.noise.seeds import derive_seeds
from rdsync.runtime.artifacts import RunContext, dumps
from rdsync.runtime.commands import get_command, uses_seeds
from rdsync.vectorfield.builtins import build

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def resolve_seeds(config: ExperimentConfig) -> List[int]:
    """Explicit noise.seeds win; otherwise n_seeds seeds are derived from noise.seed."""
    if config.noise.seeds is not None:
        return [int(s) for s in config.noise.seeds]
    return derive_seeds(config.noise.seed, config.noise.n_seeds)


def run(
    config: ExperimentConfig,
    *,
    out_dir: Optional[Union[str, Path]] = None,
    n_workers: Optional[int] = None,
) -> RunManifest:
    """
    Execute one experiment and write its outputs plus manifest.json.

    The manifest records the full config snapshot, so passing it back as a
    config reproduces the run byte for byte. Numerical failures inside a seed
    sweep are recorded per seed (exit code 3); other errors propagate.
    """
    started = time.time()
    started_at = datetime.now(timezone.utc).isoformat()
    workers = n_workers or config.n_workers or default_workers()
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    field = build(config.field) if config.field is not None else None
    seeds = resolve_seeds(config) if uses_seeds(config.command) else []
    chash = config_hash(config)
    ctx = RunContext(
        config=config, field=field, seeds=seeds, out_dir=out, n_workers=workers, config_hash=chash
    )
    logger.info(
        "run %s (hash %s): field=%s seeds=%d workers=%d -> %s",
        config.command.value, chash, field.name if field else "-", len(seeds), workers, out,
    )
    get_command(config.command)(ctx)

    exit_code = ExitCode.OK
    if ctx.seed_failures:
        logger.warning("%d of %d seeds failed", len(ctx.seed_failures), len(seeds))
        exit_code = ExitCode.NUMERICAL_FAILURE
    if ctx.suite_failed:
        exit_code = ExitCode.ACCEPTANCE_FAILURE

    manifest = RunManifest(
        config=config.model_dump(mode="json", exclude_none=True),
        config_hash=chash,
        seeds=seeds,
        toolkit_version=__version__,
        started_at=started_at,
        wall_clock_s=time.time() - started,
        outputs=dict(sorted(ctx.outputs.items())),
        seed_failures=ctx.seed_failures,
        exit_code=int(exit_code),
    )
    (out / MANIFEST_NAME).write_text(dumps(manifest), encoding="utf-8")
    logger.info("wrote %d outputs and %s in %.2fs", len(ctx.outputs), MANIFEST_NAME, manifest.wall_clock_s)
    return manifest
