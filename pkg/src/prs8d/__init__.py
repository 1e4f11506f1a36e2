"""Polarization-ring-switching 4D/8D modulation formats and their evaluation."""

__version__ = "0.1.0"
