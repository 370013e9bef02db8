"""Radial Riccati drift, Schrodinger-type auxiliary function and HJB value, solved together."""

from __future__ import annotations

__version__ = "0.1.0"
