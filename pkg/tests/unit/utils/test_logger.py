"""Unit tests for logging setup."""

import logging

import pytest

from lvat_lab.utils.logger import ROOT_LOGGER, configure_logging, get_logger


@pytest.fixture(autouse=True)
def restore_root_logger():
    logger = logging.getLogger(ROOT_LOGGER)
    handlers, level = list(logger.handlers), logger.level
    yield
    logger.handlers[:] = handlers
    logger.setLevel(level)


class TestConfigureLogging:
    """Test the package logger configuration."""

    def test_sets_level(self):
        """The level name is applied to the package logger."""
        assert configure_logging("debug").level == logging.DEBUG
        assert configure_logging("error").level == logging.ERROR

    def test_no_duplicate_handlers(self):
        """Repeated calls install a single handler."""
        configure_logging("info")
        configure_logging("info")
        logger = logging.getLogger(ROOT_LOGGER)
        assert sum(getattr(h, "_lvat_handler", False) for h in logger.handlers) == 1


class TestGetLogger:
    """Test namespaced loggers."""

    def test_prefixes_names(self):
        """Plain names are placed under the package root."""
        assert get_logger("cli").name == "lvat_lab.cli"

    def test_keeps_package_names(self):
        """Module names of the package are used as they are."""
        assert get_logger("lvat_lab.models.flow").name == "lvat_lab.models.flow"
        assert get_logger(ROOT_LOGGER).name == ROOT_LOGGER
