"""Numerical laboratory for pseudohermitian spin geometry on model charts."""

from __future__ import annotations

__version__ = "0.1.0"
