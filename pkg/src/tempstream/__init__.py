"""Temporal task planning with streams, multi-agent schedules and Pourbaix fitting."""

__version__ = "0.1.0"
