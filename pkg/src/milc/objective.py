"""InfoNCE over window/sequence pairs with a separable critic.

Scores are ``phi(z_t^i) . c^j`` for every window (i, t) and sequence j in a
batch; the positive for row (i, t) is column i, every other column is a negative.
"""

from __future__ import annotations

import warnings

import numpy as np

from .diffcore import Tensor, ops


def critic_scores(u: Tensor, c: Tensor) -> Tensor:
    """Score table of shape (N*T, N); row ``i*T + t`` holds ``u[i, t] . c[j]`` over j.

    ``u`` is the critic-embedded local vectors (N, T, D), ``c`` the global vectors (N, D).
    """
    if u.data.ndim != 3 or c.data.ndim != 2 or u.shape[0] != c.shape[0] or u.shape[2] != c.shape[1]:
        raise ValueError(f"critic_scores: incompatible shapes {u.shape} and {c.shape}")
    n, T, d = u.shape
    return ops.matmul(ops.reshape(u, (n * T, d)), ops.transpose(c, (1, 0)))


def positive_columns(n_seq: int, n_windows: int) -> np.ndarray:
    return np.repeat(np.arange(n_seq), n_windows)


def infonce_loss(scores: Tensor, n_windows: int) -> Tensor:
    """Mean over rows of ``-log softmax(row)[positive]``; equals -I_f / (N*T)."""
    s = scores.data
    if not np.all(np.isfinite(s)):
        raise ValueError("infonce_loss: non-finite scores")
    rows, n_seq = s.shape
    if rows != n_seq * n_windows:
        raise ValueError(f"infonce_loss: {rows} rows is not {n_seq} sequences x {n_windows} windows")
    if n_seq == 1:
        warnings.warn("InfoNCE with a single sequence has no negatives; loss is identically 0", stacklevel=2)
    target = positive_columns(n_seq, n_windows)
    return ops.mean(ops.sub(ops.logsumexp(scores, axis=1), ops.pick(scores, target)))


def assignment_accuracy(scores, n_windows: int) -> float:
    """Fraction of windows whose highest-scoring sequence is their own (ties -> lowest index)."""
    s = scores.data if isinstance(scores, Tensor) else np.asarray(scores)
    n_seq = s.shape[1]
    return float(np.mean(np.argmax(s, axis=1) == positive_columns(n_seq, n_windows)))
