"""Whole-sequence mutual-information pre-training (whole MILC) for multivariate time series."""

from .model import ModelBundle
from .windows import WindowSpec, extract_windows

__version__ = "0.1.0"

__all__ = ["ModelBundle", "WindowSpec", "extract_windows", "__version__"]
