"""Vulnerability detection as path-based constraint solving over
source-to-sink call chains."""

from .summary import GENERATOR_VERSION

__version__ = GENERATOR_VERSION

__all__ = ["GENERATOR_VERSION", "__version__"]
