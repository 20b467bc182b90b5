"""Unit tests for environment-based settings."""

from pathlib import Path

import pytest
from pydantic import ValidationError

from lvat_lab.config import Settings


class TestSettings:
    """Test Settings defaults and overrides."""

    def test_defaults(self, monkeypatch, tmp_path):
        """Defaults apply without environment variables."""
        monkeypatch.chdir(tmp_path)
        settings = Settings()
        assert settings.log == "info"
        assert settings.output_dir == Path("runs")
        assert settings.gradcheck_step == 1e-6
        assert settings.gradcheck_tolerance == 1e-5

    def test_environment_override(self, monkeypatch, tmp_path):
        """LVAT_* variables override the defaults."""
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("LVAT_LOG", "DEBUG")
        monkeypatch.setenv("LVAT_OUTPUT_DIR", str(tmp_path / "out"))
        settings = Settings()
        assert settings.log == "debug"
        assert settings.output_dir == tmp_path / "out"

    def test_dotenv_file(self, monkeypatch, tmp_path):
        """A .env file in the working directory is read."""
        monkeypatch.chdir(tmp_path)
        (tmp_path / ".env").write_text("LVAT_GRADCHECK_TOLERANCE=0.001\n")
        assert Settings().gradcheck_tolerance == 0.001

    def test_invalid_log_level(self, monkeypatch, tmp_path):
        """Unknown level names are rejected."""
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("LVAT_LOG", "verbose")
        with pytest.raises(ValidationError):
            Settings()

    def test_non_positive_step(self, monkeypatch, tmp_path):
        """The gradient-check step must be positive."""
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("LVAT_GRADCHECK_STEP", "0")
        with pytest.raises(ValidationError):
            Settings()
