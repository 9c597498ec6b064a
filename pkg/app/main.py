"""Command-line entry point: one experiment config in, a verdict and artifacts out."""

import argparse
import json
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import yaml
from pydantic import ValidationError

from app.config import Settings, get_settings
from app.errors import ConfigError, NotASolution, ToolkitError
from app.repositories.grid_repository import GridRepository
from app.repositories.report_repository import ReportRepository
from app.schemas.experiment import ExperimentConfig
from app.services.experiment_service import ExperimentService
from app.utils.logging import get_logger, setup_logging

logger = get_logger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_ERROR = 2


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="conformal-verify",
        description="Run one verification experiment for a conformally invariant operator.",
    )
    parser.add_argument("--config", required=True, type=Path, help="experiment config (JSON/YAML)")
    parser.add_argument("--plot", action="store_true", help="also write SVG plots")
    parser.add_argument("--threads", type=int, default=None, help="worker threads")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--verbose", action="store_true", help="DEBUG logging")
    return parser.parse_args(argv)


def _read_raw(path: Path) -> Any:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    if path.suffix.lower() in (".yaml", ".yml"):
        try:
            return yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"line {mark.line + 1} column {mark.column + 1}: " if mark else ""
            raise ConfigError(f"{path}: {where}{exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def load_config(path: Path) -> ExperimentConfig:
    """Read and validate a config; errors name the offending field or position."""
    raw = _read_raw(path)
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise ConfigError(
            f"{path}: {loc}: {first['msg']} ({exc.error_count()} error(s))"
        ) from exc


def _output_dir(args: argparse.Namespace, config: ExperimentConfig, settings: Settings) -> Path:
    if args.out is not None:
        return Path(args.out)
    return Path(config.output_dir or settings.output_dir)


def main(argv: Sequence[str] | None = None) -> int:
    args = parse_args(argv)
    settings = get_settings()
    setup_logging("DEBUG" if args.verbose else settings.log_level)

    try:
        config = load_config(args.config)
        if args.threads is not None and args.threads < 1:
            raise ConfigError(f"--threads must be at least 1, got {args.threads}")
        service = ExperimentService(
            settings,
            ReportRepository(_output_dir(args, config, settings)),
            grids=GridRepository(args.config.parent),
            plot=args.plot,
            threads=args.threads,
        )
        outcome = service.run(config)
    except NotASolution as exc:
        logger.error("NotASolution: %s", exc)
        return EXIT_FAIL
    except ToolkitError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except ValidationError as exc:
        logger.error("Invalid parameters: %s", exc)
        return EXIT_ERROR
    except Exception:
        logger.exception("Unexpected failure")
        return EXIT_ERROR

    verdict = "PASS" if outcome.passed else "FAIL"
    print(f"{verdict} {config.command.value} {outcome.summary_path}")
    return EXIT_PASS if outcome.passed else EXIT_FAIL


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
