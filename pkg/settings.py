#!/usr/bin/env python
"""
Toolkit Configuration
Loads .env overrides and exposes validated defaults for the CLI and API server
"""
import os
import logging
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator

# Load environment variables - try multiple paths
env_paths = [
    Path(__file__).parent.parent / '.env',
    Path(__file__).parent / '.env',
    Path.cwd() / '.env',
]

for env_path in env_paths:
    if env_path.exists():
        load_dotenv(env_path)
        break

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class ToolkitSettings(BaseModel):
    """Environment-driven defaults"""
    log_level: str = Field(default="INFO", description="Root logging level")
    sobel_threshold: float = Field(default=3.0, gt=0, description="Flying-pixel Sobel threshold")
    disparity_mu: float = Field(default=33.20, description="Disparity normalization mean")
    disparity_sigma: float = Field(default=15.91, gt=0, description="Disparity normalization spread")
    seed: int = Field(default=0, ge=0, description="Seed for synthetic data")
    results_dir: str = Field(default="results", description="Where JSON and TSV reports are exported")
    host: str = Field(default="0.0.0.0")
    port: int = Field(default=8023, ge=1, le=65535)

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        value = value.upper()
        if not isinstance(logging.getLevelName(value), int):
            raise ValueError(f"unknown log level {value}")
        return value


def _from_environment() -> ToolkitSettings:
    return ToolkitSettings(
        log_level=os.getenv("PSEUDO_STEREO_LOG_LEVEL", "INFO"),
        sobel_threshold=float(os.getenv("PSEUDO_STEREO_SOBEL_THRESHOLD", 3.0)),
        disparity_mu=float(os.getenv("PSEUDO_STEREO_DISP_MU", 33.20)),
        disparity_sigma=float(os.getenv("PSEUDO_STEREO_DISP_SIGMA", 15.91)),
        seed=int(os.getenv("PSEUDO_STEREO_SEED", 0)),
        results_dir=os.getenv("PSEUDO_STEREO_RESULTS_DIR", "results"),
        host=os.getenv("HOST", "0.0.0.0"),
        port=int(os.getenv("PORT", 8023)),
    )


_settings: Optional[ToolkitSettings] = None


def get_settings() -> ToolkitSettings:
    """Get or create the global settings instance"""
    global _settings
    if _settings is None:
        _settings = _from_environment()
    return _settings


def reload_settings() -> ToolkitSettings:
    """Re-read the environment (tests monkeypatch env vars then call this)"""
    global _settings
    _settings = _from_environment()
    return _settings


def configure_logging(level: Optional[str] = None) -> None:
    """Set up root logging once for an entry point"""
    logging.basicConfig(
        level=(level or get_settings().log_level).upper(),
        format=LOG_FORMAT,
    )
