"""Configuration module for lvat_lab.

Uses Pydantic BaseSettings for environment-based configuration.
"""

from pathlib import Path

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

LOG_LEVELS = ("error", "warning", "info", "debug")


class Settings(BaseSettings):
    """Process settings loaded from LVAT_* environment variables."""

    # Logging configuration
    log: str = Field(
        default="info",
        description="Log level: error, warning, info or debug",
    )

    # Output configuration
    output_dir: Path = Field(
        default=Path("runs"),
        description="Default directory for run artifacts",
    )

    # Gradient oracle configuration
    gradcheck_step: float = Field(
        default=1e-6,
        description="Central-difference step used by the gradient oracle",
        gt=0,
    )
    gradcheck_tolerance: float = Field(
        default=1e-5,
        description="Maximum relative error accepted by the gradient oracle",
        gt=0,
    )

    model_config = SettingsConfigDict(
        env_prefix="LVAT_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    @field_validator("log")
    @classmethod
    def validate_log(cls, v: str) -> str:
        """Validate that log is a known level name."""
        level = v.strip().lower()
        if level not in LOG_LEVELS:
            raise ValueError(f"log must be one of {', '.join(LOG_LEVELS)}")
        return level
