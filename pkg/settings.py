#!/usr/bin/env python3
"""
Configuration loading and logging setup.
"""

import json
import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional, Union

from pydantic import ValidationError as PydanticValidationError

from errors import ConfigurationError
from models import LabConfig, LoggingConfig, DistributionSpec
from offspring import OffspringDistribution, from_spec

CONFIG_FILE = Path(__file__).parent / "config.json"

logger = logging.getLogger('condensation_lab')


def load_config(path: Optional[Union[str, Path]] = None) -> LabConfig:
    """Load configuration from config.json, falling back to built-in defaults.

    Raises:
        ConfigurationError: unreadable JSON or values failing validation.
    """
    config_path = Path(path) if path else CONFIG_FILE
    if not config_path.exists():
        if path:
            raise ConfigurationError(f"Config file not found: {config_path}")
        return LabConfig()
    try:
        with open(config_path, 'r') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Invalid JSON in {config_path}: {e}") from e
    try:
        return LabConfig(**data)
    except PydanticValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ConfigurationError(f"Invalid config {config_path}: {problems}") from e


def setup_logging(config: LoggingConfig, console_level: Optional[str] = None) -> logging.Logger:
    """Attach a rotating file handler and a console handler to the package logger."""
    log_level = getattr(logging, config.level.upper())

    log_path = Path(config.file)
    log_path.parent.mkdir(parents=True, exist_ok=True)

    for handler in logger.handlers[:]:
        logger.removeHandler(handler)
    logger.setLevel(log_level)
    logger.propagate = False

    # File handler with rotation
    file_handler = RotatingFileHandler(
        log_path,
        maxBytes=config.max_file_size_mb * 1024 * 1024,
        backupCount=config.backup_count,
    )
    file_handler.setLevel(log_level)
    file_handler.setFormatter(logging.Formatter(config.format))

    console_handler = logging.StreamHandler()
    console_handler.setLevel(getattr(logging, (console_level or 'WARNING').upper()))
    console_handler.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(message)s'))

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)
    return logger


def resolve_distribution(config: LabConfig, name_or_json: str) -> OffspringDistribution:
    """A configured distribution by name, or an inline JSON spec.

    Raises:
        ConfigurationError: unknown name or invalid spec.
    """
    if name_or_json in config.distributions:
        spec = config.distributions[name_or_json]
    else:
        try:
            spec = DistributionSpec(**json.loads(name_or_json))
        except (json.JSONDecodeError, TypeError):
            known = sorted(config.distributions)
            raise ConfigurationError(
                f"Unknown distribution '{name_or_json}'. Known: {known}, or pass a JSON spec"
            ) from None
        except PydanticValidationError as e:
            raise ConfigurationError(f"Invalid distribution spec: {e}") from e
    return from_spec(spec.as_dict())
