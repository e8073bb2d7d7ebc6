"""HTTP facade over the tutoring engine with file-based persistence."""

from .app import create_app

__all__ = ["create_app"]
