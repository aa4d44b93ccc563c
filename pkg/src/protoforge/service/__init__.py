"""HTTP service wrapping the core package for the design-exploration UI."""

from .app import create_app

__all__ = ["create_app"]
