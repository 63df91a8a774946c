"""Evaluation engines; importing this package registers them with BackendFactory"""

from .exact import ExactSimBackend
from .he import HEBackend

__all__ = ["ExactSimBackend", "HEBackend"]
