"""Deterministic 2-D social-navigation simulator with a communicating robot planner."""

__version__ = "0.1.0"
