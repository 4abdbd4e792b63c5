"""Pricing anomaly detection: models, impact ranking, serving, and review loop."""

__version__ = "0.1.0"
