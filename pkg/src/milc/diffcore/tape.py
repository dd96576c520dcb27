"""Tensors and the operation tape used for reverse-mode differentiation.

A forward pass executed inside ``with Tape() as tape:`` records one entry per
op whose inputs require gradients. ``tape.backward(loss)`` then replays the
entries in reverse, accumulating into ``Tensor.grad``. Ops executed with no
active tape (or on tensors that need no gradient) are plain numpy evaluation.
"""

from __future__ import annotations

import contextvars
from typing import Callable, Sequence

import numpy as np

_ACTIVE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar("milc_tape", default=None)


class Tensor:
    """Dense array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    # operator sugar, resolved lazily to avoid an import cycle
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)

    def __neg__(self):
        from . import ops

        return ops.scale(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Explicit record of a forward pass."""

    def __init__(self) -> None:
        self.entries: list[tuple[tuple[Tensor, ...], Callable[[], None]]] = []
        self._token: contextvars.Token | None = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.entries)

    def backward(self, loss: Tensor, seed: np.ndarray | None = None) -> None:
        """Propagate d(loss) back through every recorded op.

        ``seed`` defaults to ones, so for a scalar loss this is dloss/dloss = 1.
        Intermediate gradients are released after use; leaf gradients stay.
        """
        if not loss.requires_grad:
            raise RuntimeError("loss does not depend on any tensor that requires grad")
        if seed is None:
            seed = np.ones_like(loss.data)
        loss.accumulate(np.asarray(seed, dtype=loss.dtype))
        for outputs, backward_fn in reversed(self.entries):
            if all(o.grad is None for o in outputs):
                continue
            backward_fn()
            for o in outputs:
                o.grad = None
        self.entries.clear()


def active_tape() -> Tape | None:
    return _ACTIVE.get()


def record(outputs: Sequence[Tensor], inputs: Sequence[Tensor], backward_fn: Callable[[], None]) -> bool:
    """Register an op on the active tape if any input needs a gradient.

    Returns True when recorded; the op's outputs are then marked as requiring
    gradients so downstream ops get recorded too.
    """
    tape = _ACTIVE.get()
    if tape is None or not any(t.requires_grad for t in inputs):
        return False
    for o in outputs:
        o.requires_grad = True
    tape.entries.append((tuple(outputs), backward_fn))
    return True
