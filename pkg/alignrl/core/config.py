"""
Ambient runtime settings.
"""
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings with environment variable support."""

    model_config = SettingsConfigDict(
        env_prefix="ALIGNRL_",
        env_file=".env",
        case_sensitive=True,
        extra="ignore",
    )

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "console"
    LOG_FILE: Optional[str] = None

    # Reproducibility
    DETERMINISTIC: bool = True
    TORCH_THREADS: int = 1

    # Parallel rollouts / collection
    WORKERS: int = 1


settings = Settings()
