"""Predict the ambiance of places from the profile pictures of their visitors."""

from __future__ import annotations

__version__ = "0.1.0"
