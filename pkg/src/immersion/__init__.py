"""Conformal surface geometry, the KKWE Dirac operator and its heat-kernel anomaly."""

__version__ = "0.1.0"
