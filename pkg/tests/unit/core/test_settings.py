"""
Unit tests for ambient settings and logging setup.
"""
import pytest

from alignrl.core.config import Settings
from alignrl.core.logging import get_run_id, set_run_id, setup_logging


@pytest.mark.unit
class TestSettings:
    """Environment-driven settings."""

    def test_defaults(self, monkeypatch):
        for name in ("ALIGNRL_LOG_LEVEL", "ALIGNRL_WORKERS", "ALIGNRL_DETERMINISTIC"):
            monkeypatch.delenv(name, raising=False)
        settings = Settings(_env_file=None)
        assert settings.LOG_LEVEL == "INFO"
        assert settings.WORKERS == 1
        assert settings.DETERMINISTIC is True

    def test_environment_overrides(self, monkeypatch):
        monkeypatch.setenv("ALIGNRL_WORKERS", "4")
        monkeypatch.setenv("ALIGNRL_LOG_FORMAT", "json")
        settings = Settings(_env_file=None)
        assert settings.WORKERS == 4
        assert settings.LOG_FORMAT == "json"


@pytest.mark.unit
class TestLogging:
    """Run ids and logger setup."""

    def test_set_run_id_generates_value(self):
        value = set_run_id()
        assert value and get_run_id() == value

    def test_set_run_id_explicit(self):
        assert set_run_id("run-1") == "run-1"
        assert get_run_id() == "run-1"

    def test_setup_logging_accepts_both_formats(self):
        setup_logging(level="DEBUG", log_format="json")
        setup_logging(level="INFO", log_format="console")
