"""Mapless zero-shot object-goal navigation on deterministic grid worlds."""

from __future__ import annotations

__version__ = "0.1.0"
