"""Shared fixtures for the decoherent quantum walk tests."""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import numpy as np
import pytest

# ---------------------------------------------------------------------------
# Ensure the decoherent_qwalk package is importable from this repo layout
# ---------------------------------------------------------------------------
_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(_ROOT))

from decoherent_qwalk.const import DOMAIN, ENV_THREADS  # noqa: E402
from decoherent_qwalk.walk import coin_operator  # noqa: E402


@pytest.fixture
def hadamard():
    return coin_operator()


@pytest.fixture
def rng():
    """Fixed-seed generator for tests that need arbitrary but repeatable numbers."""
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _isolate_environment(monkeypatch):
    """No test sees a worker count from the developer's shell."""
    monkeypatch.delenv(ENV_THREADS, raising=False)


@pytest.fixture(autouse=True)
def _reset_package_logger():
    """Detach handlers the CLI attaches, so no handler outlives its test's stderr."""
    yield
    logger = logging.getLogger(DOMAIN)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.setLevel(logging.NOTSET)
