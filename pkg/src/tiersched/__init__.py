"""Tiered human-in-the-loop meeting scheduling agent."""

__version__ = "0.1.0"
