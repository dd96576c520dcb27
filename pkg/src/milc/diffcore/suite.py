"""Finite-difference cases covering every differentiable op.

Each case reduces one op to a scalar through a fixed random projection so the
check exercises a generic upstream gradient.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import ops
from .gradcheck import check_gradients
from .tape import Tensor


def op_cases(rng: np.random.Generator) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    def leaf(*shape):
        return Tensor(rng.standard_normal(shape), requires_grad=True)

    def fixed(*shape):
        return Tensor(rng.standard_normal(shape))

    x2, y2, b4, b5 = leaf(3, 4), leaf(3, 4), leaf(4), leaf(5)
    m45, w54 = leaf(4, 5), leaf(5, 4)
    xc, wc, bc, wt = leaf(2, 3, 8), leaf(4, 3, 3), leaf(4), leaf(3, 4, 2)
    xs = leaf(3, 11)
    xi, h, c = leaf(3, 5), leaf(3, 4), leaf(3, 4)
    wih, whh, bl = leaf(16, 5), leaf(16, 4), leaf(16)
    p34, p35, p3 = fixed(3, 4), fixed(3, 5), fixed(3)
    p_cat, p_stk = fixed(3, 8), fixed(2, 3, 4)
    p_conv, p_nlc, p_ct = fixed(2, 4, 6), fixed(2, 6, 4), fixed(2, 4, 9)
    p_unf, p_cell = fixed(4, 3, 5), fixed(3, 4)

    def proj(t, p):
        return ops.sum(ops.mul(t, p))

    def lstm_two_steps():
        h1, c1 = ops.lstm_cell(xi, h, c, wih, whh, bl)
        h2, c2 = ops.lstm_cell(ops.tanh(xi), h1, c1, wih, whh, bl)
        return ops.add(ops.sum(ops.mul(h2, h2)), proj(c2, p_cell))

    return {
        "add": (lambda: proj(ops.add(x2, b4), p34), [x2, b4]),
        "sub": (lambda: proj(ops.sub(x2, y2), p34), [x2, y2]),
        "mul": (lambda: proj(ops.mul(x2, y2), p34), [x2, y2]),
        "scale": (lambda: proj(ops.scale(x2, -2.5), p34), [x2]),
        "relu": (lambda: proj(ops.relu(x2), p34), [x2]),
        "tanh": (lambda: proj(ops.tanh(x2), p34), [x2]),
        "sigmoid": (lambda: proj(ops.sigmoid(x2), p34), [x2]),
        "matmul": (lambda: proj(ops.matmul(x2, m45), p35), [x2, m45]),
        "linear": (lambda: proj(ops.linear(x2, w54, b5), p35), [x2, w54, b5]),
        "softmax": (lambda: proj(ops.softmax(x2, axis=1), p34), [x2]),
        "log_softmax": (lambda: proj(ops.log_softmax(x2, axis=0), p34), [x2]),
        "logsumexp": (lambda: proj(ops.logsumexp(x2, axis=1), p3), [x2]),
        "mean": (lambda: ops.sum(ops.mul(ops.mean(ops.mul(x2, x2), axis=0), b4)), [x2, b4]),
        "concat": (lambda: proj(ops.concat([x2, y2], axis=1), p_cat), [x2, y2]),
        "stack": (lambda: proj(ops.stack([x2, y2], axis=0), p_stk), [x2, y2]),
        "reshape_transpose": (lambda: proj(ops.transpose(ops.reshape(x2, (4, 3)), (1, 0)), p34), [x2]),
        "take": (lambda: proj(ops.take(x2, 1, axis=1), p3), [x2]),
        "pick": (lambda: ops.sum(ops.pick(ops.tanh(x2), np.array([0, 3, 1]))), [x2]),
        "unfold1d": (lambda: proj(ops.unfold1d(xs, 5, 2), p_unf), [xs]),
        "conv1d": (lambda: proj(ops.conv1d(xc, wc, bc), p_conv), [xc, wc, bc]),
        "conv1d_nlc": (lambda: proj(ops.conv1d(ops.transpose(xc, (0, 2, 1)), wc, bc, layout="nlc"), p_nlc), [xc, wc, bc]),
        "conv_transpose1d": (lambda: proj(ops.conv_transpose1d(xc, wt, b4), p_ct), [xc, wt, b4]),
        "lstm_cell": (lstm_two_steps, [xi, h, c, wih, whh, bl]),
        "cross_entropy": (lambda: ops.cross_entropy(x2, np.array([0, 3, 2])), [x2]),
        "mse": (lambda: ops.mse(x2, y2), [x2, y2]),
    }


def op_errors(seed: int = 0, h: float = 1e-5) -> dict[str, float]:
    """Max relative FD error per op."""
    cases = op_cases(np.random.default_rng(seed))
    return {name: max(check_gradients(fn, inputs, h=h).values()) for name, (fn, inputs) in cases.items()}
