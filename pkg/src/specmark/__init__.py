"""Metameric LED light pairs that cameras can tell apart and people cannot,
plus a bit channel built on switching between them."""

__version__ = "0.1.0"
