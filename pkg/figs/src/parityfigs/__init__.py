"""Offline figure generation for parity-lab experiment records."""

__version__ = "0.1.0"

STYLE_VERSION = "1"
