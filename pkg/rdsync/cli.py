"""
`rdsync` console entry point.

    rdsync sync --config rdsync/config/examples/double_well_sync.yaml --workers 4
    rdsync lyapunov --config ou_lyapunov --set lyapunov.T=50
    rdsync rerun runs/latest/manifest.json --out runs/replay
    rdsync paper-suite --scale quick
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from rdsync import __version__
from rdsync.config.loader import apply_overrides, build_config, default_workers, example_path, read_document
from rdsync.core.enums import Command, ExitCode
from rdsync.core.errors import AcceptanceFailure, ConfigError, FieldDefinitionError, NumericalError, RdsyncError

logger = logging.getLogger("rdsync")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment YAML, a run manifest, or the name of a bundled example")
    p.add_argument("--seed", type=int, help="override noise.seed")
    p.add_argument("--workers", type=int, help="worker threads (default: $RDSYNC_WORKERS or 1)")
    p.add_argument("--out", type=Path, help="output directory (default: output_dir from the config)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY.PATH=VALUE",
                   help="dotted config override; repeatable")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdsync",
        description="Synchronization by noise for SDEs with additive noise: simulation and diagnostics.",
    )
    parser.add_argument("--version", action="version", version=f"rdsync {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for command in Command:
        p = sub.add_parser(command.value)
        _add_common(p)
        if command == Command.PAPER_SUITE:
            p.add_argument("--scale", choices=["full", "quick"], help="sample-size profile")
            p.add_argument("--only", action="append", default=[], metavar="ID",
                           help="run only this criterion (and its dependencies); repeatable")
    rerun = sub.add_parser("rerun", help="re-execute a run from its manifest.json")
    rerun.add_argument("manifest", type=Path)
    rerun.add_argument("--workers", type=int)
    rerun.add_argument("--out", type=Path)
    rerun.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return parser


def _config_path(raw: str) -> Path:
    p = Path(raw)
    if p.is_file():
        return p
    return example_path(raw)


def _document(args: argparse.Namespace) -> Dict[str, Any]:
    if args.subcommand == "rerun":
        return read_document(args.manifest)
    doc: Dict[str, Any] = read_document(_config_path(args.config)) if args.config else {}
    doc["command"] = args.subcommand
    overrides: List[str] = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"noise.seed={args.seed}")
    if getattr(args, "scale", None):
        overrides.append(f"suite.scale={args.scale}")
    if getattr(args, "only", None):
        overrides.append(f"suite.only=[{', '.join(args.only)}]")
    return apply_overrides(doc, overrides)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT, stream=sys.stderr)

    from rdsync.runtime.run_experiment import run

    try:
        config = build_config(_document(args))
        workers = args.workers or config.n_workers or default_workers()
        if workers < 1:
            raise ConfigError(f"--workers must be >= 1, got {workers}", key_path="n_workers")
        manifest = run(config, out_dir=args.out, n_workers=workers)
    except (ConfigError, FieldDefinitionError) as e:
        logger.error("configuration error: %s", e)
        return int(ExitCode.CONFIG_ERROR)
    except NumericalError as e:
        logger.error("numerical failure: %s", e)
        return int(ExitCode.NUMERICAL_FAILURE)
    except AcceptanceFailure as e:
        logger.error("acceptance failure: %s", e)
        return int(ExitCode.ACCEPTANCE_FAILURE)
    except (RdsyncError, ValueError) as e:
        logger.error("invalid input: %s", e)
        return int(ExitCode.CONFIG_ERROR)

    if manifest.exit_code == ExitCode.ACCEPTANCE_FAILURE:
        logger.error("acceptance suite failed; see suite.md")
    elif manifest.exit_code == ExitCode.NUMERICAL_FAILURE:
        logger.error("%d seeds failed: %s", len(manifest.seed_failures), sorted(manifest.seed_failures))
    return int(manifest.exit_code)


if __name__ == "__main__":
    raise SystemExit(main())
