"""Numerical laboratory for concentrated vortices in 2D incompressible Euler flow."""

from __future__ import annotations

__version__ = "0.1.0"
