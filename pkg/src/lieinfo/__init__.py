"""Information theory on unimodular Lie groups, checked numerically."""

__version__ = "0.1.0"
