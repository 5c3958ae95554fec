"""Spin transport functionals for periodic tight-binding models on Z^2."""

__version__ = "0.1.0"
