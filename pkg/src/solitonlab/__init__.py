"""Numerical lab for mean curvature flow self-shrinkers and translators."""

__version__ = "0.1.0"
