# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

import logging
import os
import sys
from typing import Any, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator

load_dotenv()

logger = logging.getLogger("config")

LOG_FORMAT = "%(filename)s:%(lineno)d | %(message)s"

# L1 slack used by every "<= budget" comparison on witnesses
BUDGET_SLACK = 1e-9


class Settings(BaseModel):
    """Process-wide numeric and runtime settings."""

    tol_stochastic: float = Field(
        default=1e-9, gt=0, lt=1e-2, description="Row-sum tolerance for distributions"
    )
    tol_exact: float = Field(
        default=1e-9, gt=0, lt=1e-2, description="Equality tolerance for exact bisimulation"
    )
    threads: int = Field(default=1, ge=1, le=256, description="Worker threads for bench")
    cell_timeout_s: float = Field(
        default=7200.0, gt=0, description="Per-cell timeout of the experiment harness"
    )
    strict_json: bool = Field(
        default=False, description="Reject unknown fields when reading JSON documents"
    )
    log_level: str = Field(default="INFO", description="Logging level name")

    @field_validator("log_level", mode="before")
    @classmethod
    def validate_log_level(cls, v):
        name = str(v).upper()
        if name not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"unknown log level: {v}")
        return name

    @field_validator("strict_json", mode="before")
    @classmethod
    def validate_strict(cls, v):
        if isinstance(v, str):
            return v.strip().lower() in ("1", "true", "yes", "on")
        return v


ENV_NAMES = {
    "tol_stochastic": "MCMIN_TOL_STOCHASTIC",
    "tol_exact": "MCMIN_TOL_EXACT",
    "threads": "MCMIN_THREADS",
    "cell_timeout_s": "MCMIN_CELL_TIMEOUT",
    "strict_json": "MCMIN_STRICT_JSON",
    "log_level": "MCMIN_LOG_LEVEL",
}

_settings: Optional[Settings] = None


def load_settings() -> Settings:
    """Read settings from the environment (and a .env file, if present).

    Returns:
        Validated settings

    Raises:
        ValueError: if an environment variable holds an invalid value
    """
    values = {}
    for field, env_name in ENV_NAMES.items():
        value = os.getenv(env_name)
        if value is not None and value != "":
            values[field] = value
    try:
        return Settings(**values)
    except Exception as e:
        logger.error(f"Invalid MCMIN_* environment configuration: {e}")
        raise ValueError(f"invalid configuration: {e}") from e


def get_settings() -> Settings:
    global _settings
    if _settings is None:
        _settings = load_settings()
    return _settings


def update(**overrides: Any) -> Settings:
    """Replace selected settings, e.g. from command-line flags.

    Args:
        **overrides: field values; None values are ignored

    Returns:
        The new process-wide settings
    """
    global _settings
    current = get_settings().model_dump()
    current.update({k: v for k, v in overrides.items() if v is not None})
    _settings = Settings(**current)
    logger.debug(f"settings updated: {_settings}")
    return _settings


def reset() -> None:
    global _settings
    _settings = None


def tol_stochastic(value: Optional[float] = None) -> float:
    return get_settings().tol_stochastic if value is None else value


def tol_exact(value: Optional[float] = None) -> float:
    return get_settings().tol_exact if value is None else value


def setup_logging(level: Optional[str] = None) -> None:
    """Configure stderr logging in the project's format."""
    name = (level or get_settings().log_level).upper()
    logging.basicConfig(
        level=getattr(logging, name, logging.INFO),
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )
