"""Orchard fruit detection, counting and yield estimation toolkit."""

from .slic import BACKEND

__version__ = "1.0.0"
__all__ = ["BACKEND", "__version__"]
