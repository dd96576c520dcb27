"""Fixed-length overlapping windows over a (channels, length) series."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True)
class WindowSpec:
    win_len: int = 20
    overlap: float = 0.5

    def __post_init__(self) -> None:
        if self.win_len < 2:
            raise ValueError(f"win_len must be >= 2, got {self.win_len}")
        if not 0.0 <= self.overlap < 1.0:
            raise ValueError(f"overlap must lie in [0, 1), got {self.overlap}")
        if self.stride < 1:
            raise ValueError(f"win_len={self.win_len}, overlap={self.overlap} gives stride < 1")

    @property
    def stride(self) -> int:
        # round half up
        return int(math.floor(self.win_len * (1.0 - self.overlap) + 0.5))

    def count(self, length: int) -> int:
        if length < self.win_len:
            return 0
        return (length - self.win_len) // self.stride + 1

    def covered(self, length: int) -> int:
        """Number of leading time points that fall inside at least one window."""
        n = self.count(length)
        return 0 if n == 0 else (n - 1) * self.stride + self.win_len


@dataclass
class WindowedSequence:
    windows: np.ndarray  # (T, channels, win_len)
    t_index: np.ndarray  # start column of each window
    source_id: str | int | None = None

    def __len__(self) -> int:
        return len(self.t_index)


def window_view(x: np.ndarray, window: WindowSpec) -> np.ndarray:
    """Windows of ``x`` (..., channels, length) as (..., T, channels, win_len).

    Read-only strided view; copy before mutating.
    """
    length = x.shape[-1]
    if length < window.win_len:
        raise ValueError(f"series length {length} is shorter than win_len {window.win_len}")
    v = sliding_window_view(x, window.win_len, axis=-1)[..., :: window.stride, :]
    return np.moveaxis(v, -2, -3)


def extract_windows(ts: np.ndarray, window: WindowSpec = WindowSpec(), source_id=None) -> WindowedSequence:
    ts = np.asarray(ts)
    if ts.ndim != 2:
        raise ValueError(f"expected a (channels, length) array, got shape {ts.shape}")
    w = np.ascontiguousarray(window_view(ts, window))
    return WindowedSequence(w, np.arange(len(w)) * window.stride, source_id)
