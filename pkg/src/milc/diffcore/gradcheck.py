"""Central finite-difference checks against tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tape import Tape, Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |analytic - numeric| / max(1, |numeric|), elementwise."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))


def numeric_grad(fn: Callable[[], float], t: Tensor, h: float = 1e-5, coords=None) -> np.ndarray:
    """Central differences of scalar ``fn()`` w.r.t. ``t.data`` (perturbed in place).

    ``coords`` optionally restricts to a list of flat indices; other entries are NaN.
    """
    flat = t.data.reshape(-1)
    out = np.full(flat.shape, np.nan)
    idx = range(flat.size) if coords is None else coords
    for k in idx:
        orig = flat[k]
        flat[k] = orig + h
        fp = fn()
        flat[k] = orig - h
        fm = fn()
        flat[k] = orig
        out[k] = (fp - fm) / (2 * h)
    return out.reshape(t.shape)


def check_gradients(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> dict[int, float]:
    """Compare tape gradients of scalar ``fn()`` with finite differences.

    All ``inputs`` must be float64 and ``requires_grad``. Returns the relative
    error per input position. With ``max_coords`` only that many randomly chosen
    coordinates per input are differenced.
    """
    for t in inputs:
        if t.dtype != np.float64:
            raise TypeError("gradient checks need float64 tensors")
        t.grad = None
    with Tape() as tape:
        loss = fn()
    if loss.data.size != 1:
        raise ValueError("check_gradients needs a scalar-valued function")
    tape.backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    def value() -> float:
        return float(fn().data)

    errors = {}
    for k, t in enumerate(inputs):
        coords = None
        if max_coords is not None and t.data.size > max_coords:
            rng = rng or np.random.default_rng(0)
            coords = rng.choice(t.data.size, max_coords, replace=False)
        num = numeric_grad(value, t, h=h, coords=coords)
        sel = slice(None) if coords is None else coords
        errors[k] = relative_error(analytic[k].reshape(-1)[sel], num.reshape(-1)[sel])
    return errors
