"""Differentiable ops over :class:`Tensor`.

Each op computes its forward value with numpy and, when recorded on the active
tape, registers a closure that accumulates exact gradients into its inputs.
Shape errors name the op and the offending shapes.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tape import Tensor, as_tensor, record


def _shape_error(op: str, *shapes) -> ValueError:
    return ValueError(f"{op}: incompatible shapes {', '.join(str(tuple(s)) for s in shapes)}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _push(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.accumulate(g)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise _shape_error(op, a.shape, b.shape) from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    out = Tensor(a.data + b.data)

    def backward():
        _push(a, _unbroadcast(out.grad, a.shape))
        _push(b, _unbroadcast(out.grad, b.shape))

    record((out,), (a, b), backward)
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    out = Tensor(a.data - b.data)

    def backward():
        _push(a, _unbroadcast(out.grad, a.shape))
        _push(b, _unbroadcast(-out.grad, b.shape))

    record((out,), (a, b), backward)
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    out = Tensor(a.data * b.data)

    def backward():
        if a.requires_grad:
            a.accumulate(_unbroadcast(out.grad * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(out.grad * a.data, b.shape))

    record((out,), (a, b), backward)
    return out


def scale(a: Tensor, k: float) -> Tensor:
    out = Tensor(a.data * a.data.dtype.type(k))

    def backward():
        a.accumulate(out.grad * a.data.dtype.type(k))

    record((out,), (a,), backward)
    return out


def relu(x: Tensor) -> Tensor:
    y = np.maximum(x.data, 0)
    out = Tensor(y)

    def backward():
        x.accumulate(out.grad * (y > 0))

    record((out,), (x,), backward)
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = Tensor(y)

    def backward():
        x.accumulate(out.grad * (1 - y * y))

    record((out,), (x,), backward)
    return out


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    out = Tensor(y)

    def backward():
        x.accumulate(out.grad * y * (1 - y))

    record((out,), (x,), backward)
    return out


# ------------------------------------------------------------------ reductions


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = Tensor(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)))

    def backward():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x.accumulate(np.broadcast_to(g, x.shape).astype(x.dtype, copy=True))

    record((out,), (x,), backward)
    return out


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def logsumexp(x: Tensor, axis: int = -1) -> Tensor:
    """Overflow-safe log(sum(exp(x))) along ``axis`` (axis is dropped)."""
    m = x.data.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0)
    e = np.exp(x.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = Tensor(np.squeeze(np.log(s) + m, axis=axis))
    probs = e / s

    def backward():
        x.accumulate(np.expand_dims(out.grad, axis) * probs)

    record((out,), (x,), backward)
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def backward():
        g = out.grad
        x.accumulate(y * (g - (g * y).sum(axis=axis, keepdims=True)))

    record((out,), (x,), backward)
    return out


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    m = x.data.max(axis=axis, keepdims=True)
    shifted = x.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    out = Tensor(y)

    def backward():
        g = out.grad
        x.accumulate(g - np.exp(y) * g.sum(axis=axis, keepdims=True))

    record((out,), (x,), backward)
    return out


# ------------------------------------------------------------- linear algebra


def matmul(a, b) -> Tensor:
    """``a @ b`` for ``a`` of shape (..., m, k) and ``b`` of shape (k, n) or (..., k, n)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise _shape_error("matmul", a.shape, b.shape)
    out = Tensor(a.data @ b.data)

    def backward():
        g = out.grad
        if a.requires_grad:
            a.accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b.accumulate(_unbroadcast(gb, b.shape))

    record((out,), (a, b), backward)
    return out


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ weight.T + bias``; weight is (out, in), x is (..., in)."""
    if x.shape[-1] != weight.shape[1] or (bias is not None and bias.shape != (weight.shape[0],)):
        raise _shape_error("linear", x.shape, weight.shape, () if bias is None else bias.shape)
    y = x.data @ weight.data.T
    if bias is not None:
        y = y + bias.data
    out = Tensor(y)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward():
        g = out.grad
        if x.requires_grad:
            x.accumulate(g @ weight.data)
        g2 = g.reshape(-1, g.shape[-1])
        if weight.requires_grad:
            weight.accumulate(g2.T @ x.data.reshape(-1, x.shape[-1]))
        if bias is not None and bias.requires_grad:
            bias.accumulate(g2.sum(axis=0))

    record((out,), inputs, backward)
    return out


# ---------------------------------------------------------------- structural


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))

    def backward():
        x.accumulate(out.grad.reshape(x.shape))

    record((out,), (x,), backward)
    return out


def transpose(x: Tensor, axes) -> Tensor:
    out = Tensor(np.transpose(x.data, axes))
    inverse = np.argsort(axes)

    def backward():
        x.accumulate(np.transpose(out.grad, inverse))

    record((out,), (x,), backward)
    return out


def take(x: Tensor, index, axis: int = 0) -> Tensor:
    """Basic slicing/integer selection along one axis (``np.take`` semantics)."""
    out = Tensor(np.take(x.data, index, axis=axis))

    def backward():
        g = np.zeros_like(x.data)
        sl = [slice(None)] * x.data.ndim
        sl[axis] = index
        if isinstance(index, (slice, int, np.integer)):
            g[tuple(sl)] = out.grad
        else:
            np.add.at(g, tuple(sl), out.grad)
        x.accumulate(g)

    record((out,), (x,), backward)
    return out


def pick(x: Tensor, index: np.ndarray) -> Tensor:
    """Row-wise gather: ``out[i] = x[i, index[i]]`` for 2-D ``x``."""
    index = np.asarray(index)
    if x.data.ndim != 2 or index.shape != (x.shape[0],):
        raise _shape_error("pick", x.shape, index.shape)
    rows = np.arange(x.shape[0])
    out = Tensor(x.data[rows, index])

    def backward():
        g = np.zeros_like(x.data)
        g[rows, index] = out.grad
        x.accumulate(g)

    record((out,), (x,), backward)
    return out


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    try:
        out = Tensor(np.concatenate([t.data for t in xs], axis=axis))
    except ValueError:
        raise _shape_error("concat", *(t.shape for t in xs)) from None
    bounds = np.cumsum([0] + [t.shape[axis] for t in xs])

    def backward():
        g = out.grad
        for t, lo, hi in zip(xs, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t.accumulate(g[tuple(sl)])

    record((out,), xs, backward)
    return out


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    try:
        out = Tensor(np.stack([t.data for t in xs], axis=axis))
    except ValueError:
        raise _shape_error("stack", *(t.shape for t in xs)) from None

    def backward():
        g = out.grad
        for k, t in enumerate(xs):
            if t.requires_grad:
                t.accumulate(np.take(g, k, axis=axis))

    record((out,), xs, backward)
    return out


def unfold1d(x: Tensor, win_len: int, stride: int) -> Tensor:
    """(channels, L) -> (T, channels, win_len) overlapping windows.

    The backward pass sums contributions of overlapping windows; time points
    past the last window receive zero gradient.
    """
    if x.data.ndim != 2 or x.shape[1] < win_len or stride < 1:
        raise _shape_error("unfold1d", x.shape, (win_len, stride))
    C, L = x.shape
    T = (L - win_len) // stride + 1
    v = sliding_window_view(x.data, win_len, axis=1)[:, ::stride, :]
    out = Tensor(np.ascontiguousarray(v.transpose(1, 0, 2)))

    def backward():
        g = np.zeros_like(x.data)
        for t in range(T):
            g[:, t * stride : t * stride + win_len] += out.grad[t]
        x.accumulate(g)

    record((out,), (x,), backward)
    return out


# ---------------------------------------------------------------- convolution


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, layout: str = "ncl") -> Tensor:
    """Valid, stride-1 cross-correlation.

    x: (batch, c_in, L), weight: (c_out, c_in, k), bias: (c_out,)
    -> (batch, c_out, L - k + 1) with
    ``out[b, o, t] = bias[o] + sum_{c, j} weight[o, c, j] * x[b, c, t + j]``.

    ``layout="nlc"`` takes and returns (batch, L, channels) arrays instead,
    which avoids a transpose copy per layer in a conv stack.
    """
    if layout not in ("ncl", "nlc"):
        raise ValueError(f"conv1d: unknown layout {layout!r}")
    c_axis = 1 if layout == "ncl" else 2
    if x.data.ndim != 3 or weight.data.ndim != 3 or x.shape[c_axis] != weight.shape[1]:
        raise _shape_error("conv1d", x.shape, weight.shape)
    xd = x.data if layout == "nlc" else x.data.transpose(0, 2, 1)
    B, L, C = xd.shape
    O, _, k = weight.shape
    if L < k:
        raise ValueError(f"conv1d: input length {L} shorter than kernel size {k}")
    Lo = L - k + 1
    # cols[b, t, c, j] = x[b, c, t + j]
    cols = sliding_window_view(xd, k, axis=1).reshape(B * Lo, C * k)
    wmat = weight.data.reshape(O, C * k)
    y = cols @ wmat.T
    if bias is not None:
        y += bias.data
    y = y.reshape(B, Lo, O)
    out = Tensor(y if layout == "nlc" else y.transpose(0, 2, 1))
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward():
        g = out.grad if layout == "nlc" else out.grad.transpose(0, 2, 1)
        g = g.reshape(B * Lo, O)
        if weight.requires_grad:
            weight.accumulate((g.T @ cols).reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            bias.accumulate(g.sum(axis=0))
        if x.requires_grad:
            dcols = (g @ wmat).reshape(B, Lo, C, k)
            dx = np.zeros((B, L, C), dtype=xd.dtype)
            for j in range(k):
                dx[:, j : j + Lo, :] += dcols[:, :, :, j]
            x.accumulate(dx if layout == "nlc" else dx.transpose(0, 2, 1))

    record((out,), inputs, backward)
    return out


def conv_transpose1d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Stride-1 transposed convolution (adjoint of :func:`conv1d` in ``x``).

    x: (batch, c_in, L), weight: (c_in, c_out, k) -> (batch, c_out, L + k - 1) with
    ``out[b, o, t + j] += sum_c x[b, c, t] * weight[c, o, j]``.
    """
    if x.data.ndim != 3 or weight.data.ndim != 3 or x.shape[1] != weight.shape[0]:
        raise _shape_error("conv_transpose1d", x.shape, weight.shape)
    B, C, L = x.shape
    _, O, k = weight.shape
    Lo = L + k - 1
    xt = x.data.transpose(0, 2, 1).reshape(B * L, C)
    wmat = weight.data.reshape(C, O * k)
    contrib = (xt @ wmat).reshape(B, L, O, k)
    y = np.zeros((B, O, Lo), dtype=np.result_type(x.data, weight.data))
    for j in range(k):
        y[:, :, j : j + L] += contrib[:, :, :, j].transpose(0, 2, 1)
    if bias is not None:
        y += bias.data[None, :, None]
    out = Tensor(y)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward():
        g = out.grad
        # gcols[b, t, o, j] = g[b, o, t + j]
        gcols = sliding_window_view(g, k, axis=2).transpose(0, 2, 1, 3).reshape(B * L, O * k)
        if weight.requires_grad:
            weight.accumulate((xt.T @ gcols).reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            bias.accumulate(g.sum(axis=(0, 2)))
        if x.requires_grad:
            x.accumulate((gcols @ wmat.T).reshape(B, L, C).transpose(0, 2, 1))

    record((out,), inputs, backward)
    return out


# ---------------------------------------------------------------- recurrence


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, w_ih: Tensor, w_hh: Tensor, bias: Tensor) -> tuple[Tensor, Tensor]:
    """One step of the four-gate LSTM.

    Gate rows of ``w_ih`` (4H, I), ``w_hh`` (4H, H) and ``bias`` (4H,) are
    ordered input, forget, cell candidate, output::

        i, f, g, o = sigmoid(.), sigmoid(.), tanh(.), sigmoid(.)
        c' = f * c + i * g
        h' = o * tanh(c')
    """
    H = h.shape[-1]
    if (
        w_ih.shape[0] != 4 * H
        or w_hh.shape != (4 * H, H)
        or bias.shape != (4 * H,)
        or x.shape[-1] != w_ih.shape[1]
        or c.shape != h.shape
        or x.shape[:-1] != h.shape[:-1]
    ):
        raise _shape_error("lstm_cell", x.shape, h.shape, c.shape, w_ih.shape, w_hh.shape, bias.shape)
    pre = x.data @ w_ih.data.T + h.data @ w_hh.data.T + bias.data
    i = _sigmoid(pre[:, :H])
    f = _sigmoid(pre[:, H : 2 * H])
    g = np.tanh(pre[:, 2 * H : 3 * H])
    o = _sigmoid(pre[:, 3 * H :])
    c_new = f * c.data + i * g
    tc = np.tanh(c_new)
    h_out = Tensor(o * tc)
    c_out = Tensor(c_new)

    def backward():
        gh = h_out.grad if h_out.grad is not None else 0.0
        gc = c_out.grad if c_out.grad is not None else 0.0
        gc = gc + gh * o * (1 - tc * tc)
        dpre = np.concatenate(
            [
                gc * g * i * (1 - i),
                gc * c.data * f * (1 - f),
                gc * i * (1 - g * g),
                gh * tc * o * (1 - o),
            ],
            axis=-1,
        )
        if c.requires_grad:
            c.accumulate(gc * f)
        if x.requires_grad:
            x.accumulate(dpre @ w_ih.data)
        if h.requires_grad:
            h.accumulate(dpre @ w_hh.data)
        if w_ih.requires_grad:
            w_ih.accumulate(dpre.T @ x.data)
        if w_hh.requires_grad:
            w_hh.accumulate(dpre.T @ h.data)
        if bias.requires_grad:
            bias.accumulate(dpre.sum(axis=0))

    record((h_out, c_out), (x, h, c, w_ih, w_hh, bias), backward)
    return h_out, c_out


# --------------------------------------------------------------------- losses


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under row softmax."""
    return mean(sub(logsumexp(logits, axis=-1), pick(logits, targets)))


def mse(a: Tensor, b) -> Tensor:
    d = sub(a, b)
    return mean(mul(d, d))
