"""Discrete-time quantum walk simulator with measurement and broken-link decoherence."""

from __future__ import annotations

import json
import pathlib

_MANIFEST = json.loads((pathlib.Path(__file__).parent / "manifest.json").read_text())
__version__: str = _MANIFEST.get("version", "unknown")
