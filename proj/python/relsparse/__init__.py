"""Relative-sparsity offline policy optimization."""

from ._core import *  # noqa: F401,F403
from ._core import (
    ConfigError,
    DataError,
    InfeasibleSelectionError,
    NumericalError,
    RelsparseError,
)

__all__ = [name for name in dir() if not name.startswith("_")]
