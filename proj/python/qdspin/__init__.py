"""Quantum-dot spin Ramsey simulation (C++ core)."""

from ._core import *  # noqa: F401,F403
from ._core import ConfigError, DomainError, FitError  # noqa: F401

__version__ = "0.1.0"
