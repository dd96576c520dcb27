"""Sequence aggregation: biLSTM over window embeddings, additive attention
pooling into one global vector, and the critic's embedding of local vectors."""

from __future__ import annotations

import numpy as np

from .diffcore import Tensor, ops
from .encoder import EMBED_DIM, uniform_fan_in

HIDDEN = 100
GLOBAL_DIM = 2 * HIDDEN


def init_seqmodel(rng: np.random.Generator, embed_dim: int = EMBED_DIM, hidden: int = HIDDEN, dtype=np.float32) -> dict[str, np.ndarray]:
    params = {}
    for d in ("fwd", "bwd"):
        params[f"lstm.{d}.w_ih"] = uniform_fan_in(rng, (4 * hidden, embed_dim), hidden, dtype)
        params[f"lstm.{d}.w_hh"] = uniform_fan_in(rng, (4 * hidden, hidden), hidden, dtype)
        b = uniform_fan_in(rng, (4 * hidden,), hidden, dtype)
        b[hidden : 2 * hidden] = 1.0  # forget gate
        params[f"lstm.{d}.bias"] = b
    g = 2 * hidden
    params["attn.proj.weight"] = uniform_fan_in(rng, (g, g), g, dtype)
    params["attn.proj.bias"] = uniform_fan_in(rng, (g,), g, dtype)
    params["attn.score.weight"] = uniform_fan_in(rng, (1, g), g, dtype)
    return params


def init_critic(rng: np.random.Generator, embed_dim: int = EMBED_DIM, out_dim: int = GLOBAL_DIM, dtype=np.float32) -> dict[str, np.ndarray]:
    return {
        "critic.phi.weight": uniform_fan_in(rng, (out_dim, embed_dim), embed_dim, dtype),
        "critic.phi.bias": uniform_fan_in(rng, (out_dim,), embed_dim, dtype),
    }


def _run_direction(p: dict[str, Tensor], d: str, z: Tensor, order) -> list[Tensor]:
    n, hidden = z.shape[0], p[f"lstm.{d}.w_hh"].shape[1]
    h = Tensor(np.zeros((n, hidden), dtype=z.dtype))
    c = Tensor(np.zeros((n, hidden), dtype=z.dtype))
    states: dict[int, Tensor] = {}
    for t in order:
        h, c = ops.lstm_cell(ops.take(z, t, axis=1), h, c, p[f"lstm.{d}.w_ih"], p[f"lstm.{d}.w_hh"], p[f"lstm.{d}.bias"])
        states[t] = h
    return [states[t] for t in range(z.shape[1])]


def bilstm(p: dict[str, Tensor], z: Tensor) -> Tensor:
    """(n_seq, T, embed) -> (n_seq, T, 2 * hidden), forward states first."""
    T = z.shape[1]
    fwd = _run_direction(p, "fwd", z, range(T))
    bwd = _run_direction(p, "bwd", z, range(T - 1, -1, -1))
    return ops.stack([ops.concat([f, b], axis=-1) for f, b in zip(fwd, bwd)], axis=1)


def attention_pool(p: dict[str, Tensor], h: Tensor) -> tuple[Tensor, Tensor]:
    """Additive attention: e_t = w . tanh(W h_t + b), alpha = softmax(e), c = sum alpha_t h_t."""
    n, T, g = h.shape
    e = ops.linear(ops.tanh(ops.linear(h, p["attn.proj.weight"], p["attn.proj.bias"])), p["attn.score.weight"])
    alpha = ops.softmax(ops.reshape(e, (n, T)), axis=1)
    c = ops.sum(ops.mul(ops.reshape(alpha, (n, T, 1)), h), axis=1)
    return c, alpha


def aggregate(p: dict[str, Tensor], z: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Window embeddings (n_seq, T, embed) -> (c, alpha, biLSTM states)."""
    if z.data.ndim != 3:
        raise ValueError(f"aggregate expects (n_seq, T, embed), got {z.shape}")
    if z.shape[1] < 1:
        raise ValueError("aggregate needs at least one window per sequence")
    h = bilstm(p, z)
    c, alpha = attention_pool(p, h)
    return c, alpha, h


def phi(p: dict[str, Tensor], z: Tensor) -> Tensor:
    return ops.linear(z, p["critic.phi.weight"], p["critic.phi.bias"])
