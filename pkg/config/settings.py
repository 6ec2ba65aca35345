"""
Runtime settings and logging configuration.
"""

import logging
import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

DEFAULT_DHCP_DELIMITERS = " \t,./\\_-+|{}[]()=:"

# Global settings instance
_settings = None


@dataclass(frozen=True)
class Settings:
    """Tunables read from the environment (IOTNOT_* variables)."""

    log_level: str = 'INFO'
    max_workers: int = 4
    samples_per_device: int = 100
    logreg_lambda: float = 1.0
    logreg_max_iter: int = 10000
    logreg_tol: float = 1e-6
    tree_max_depth: int = 5
    dhcp_delimiters: str = DEFAULT_DHCP_DELIMITERS


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    return int(value) if value else default


def _env_float(name: str, default: float) -> float:
    value = os.getenv(name)
    return float(value) if value else default


def get_settings() -> Settings:
    """
    Get the process-wide settings.
    Reads the environment on first use.
    """
    global _settings

    if _settings is None:
        _settings = Settings(
            log_level=os.getenv('IOTNOT_LOG_LEVEL', 'INFO').upper(),
            max_workers=_env_int('IOTNOT_MAX_WORKERS', 4),
            samples_per_device=_env_int('IOTNOT_SAMPLES_PER_DEVICE', 100),
            logreg_lambda=_env_float('IOTNOT_LOGREG_LAMBDA', 1.0),
            logreg_max_iter=_env_int('IOTNOT_LOGREG_MAX_ITER', 10000),
            logreg_tol=_env_float('IOTNOT_LOGREG_TOL', 1e-6),
            tree_max_depth=_env_int('IOTNOT_TREE_MAX_DEPTH', 5),
            dhcp_delimiters=os.getenv('IOTNOT_DHCP_DELIMITERS', DEFAULT_DHCP_DELIMITERS),
        )

    return _settings


def reset_settings():
    """
    Drop the cached settings so the next get_settings() re-reads the environment.
    Used by tests that patch IOTNOT_* variables.
    """
    global _settings
    _settings = None


def configure_logging(level: Optional[str] = None):
    """
    Configure root logging once for CLI runs.

    Args:
        level: Level name; falls back to IOTNOT_LOG_LEVEL
    """
    level_name = (level or get_settings().log_level).upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format='%(asctime)s %(levelname)-7s %(name)s: %(message)s',
    )
