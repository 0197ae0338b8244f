"""Demonstration-free natural walking lab for a planar muscle-driven biped."""

__version__ = "0.1.0"
