"""Input-gradient saliency for a fitted classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import Tape, Tensor, ops
from .model import ModelBundle


@dataclass
class SaliencyMap:
    map: np.ndarray  # (channels, length), max-normalized to [0, 1]
    raw: np.ndarray  # |d logit / d x| before normalization
    predicted_class: int
    logits: np.ndarray
    attention: np.ndarray  # per-window weights alpha
    window_starts: np.ndarray
    sample_id: str | None = None

    def sidecar(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "predicted_class": self.predicted_class,
            "logits": [float(v) for v in self.logits],
            "attention": [float(v) for v in self.attention],
            "window_starts": [int(v) for v in self.window_starts],
        }


def selected_logit(model: ModelBundle, x: Tensor, cls: int | None = None) -> tuple[Tensor, np.ndarray, np.ndarray, int]:
    """Differentiable path series -> windows -> encoder -> biLSTM/attention -> head.

    Returns (logit of ``cls`` or of the argmax class, all logits, attention, class).
    """
    w = ops.unfold1d(x, model.window.win_len, model.window.stride)
    w = ops.reshape(w, (1,) + w.shape)
    _, c, alpha = model.embed(w)
    logits = model.head(c)
    cls = int(np.argmax(logits.data[0])) if cls is None else int(cls)
    return ops.take(ops.reshape(logits, (-1,)), cls, axis=0), logits.data[0], alpha.data[0], cls


def saliency_map(model: ModelBundle, ts: np.ndarray, sample_id: str | None = None, require_fitted: bool = True) -> SaliencyMap:
    """|d logit_pred / d input| with overlapping-window contributions summed."""
    if require_fitted and model.meta.get("kind") != "downstream":
        raise ValueError("saliency needs a fitted downstream model (checkpoint kind 'downstream')")
    ts = np.asarray(ts)
    if ts.ndim != 2 or ts.shape[0] != model.channels:
        raise ValueError(f"expected a ({model.channels}, length) series, got shape {ts.shape}")
    if ts.shape[1] < model.window.win_len:
        raise ValueError(f"series length {ts.shape[1]} is shorter than win_len {model.window.win_len}")
    saved = {k: t.requires_grad for k, t in model.params.items()}
    model.set_trainable(())
    try:
        x = Tensor(ts.astype(model.params["encoder.fc.weight"].dtype), requires_grad=True)
        with Tape() as tape:
            logit, logits, alpha, cls = selected_logit(model, x)
        tape.backward(logit)
    finally:
        for k, t in model.params.items():
            t.requires_grad = saved[k]
    raw = np.abs(x.grad)
    peak = raw.max()
    norm = raw / peak if peak > 0 else np.zeros_like(raw)
    starts = np.arange(model.window.count(ts.shape[1])) * model.window.stride
    return SaliencyMap(norm, raw, cls, logits, alpha, starts, sample_id)
