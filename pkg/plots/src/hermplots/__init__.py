"""Rendering scripts for hermlab run outputs."""

__version__ = "0.1.0"
