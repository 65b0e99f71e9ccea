"""Utility helpers for tractconn."""

__all__ = ["parallel"]
