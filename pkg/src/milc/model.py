"""Parameter bundle tying encoder, sequence model, critic and head together."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import encoder as enc
from . import seqmodel
from .diffcore import Tensor, ops
from .windows import WindowSpec, window_view

N_CLASSES = 2

ENCODER_PREFIX = "encoder."
DECODER_PREFIX = "decoder."
PRETRAINED_PREFIXES = ("encoder.", "lstm.", "attn.", "critic.")
HEAD_PREFIX = "head."


def init_head(rng: np.random.Generator, in_dim: int = seqmodel.GLOBAL_DIM, hidden: int = 200, dtype=np.float32) -> dict[str, np.ndarray]:
    return {
        "head.fc0.weight": enc.uniform_fan_in(rng, (hidden, in_dim), in_dim, dtype),
        "head.fc0.bias": enc.uniform_fan_in(rng, (hidden,), in_dim, dtype),
        "head.fc1.weight": enc.uniform_fan_in(rng, (N_CLASSES, hidden), hidden, dtype),
        "head.fc1.bias": enc.uniform_fan_in(rng, (N_CLASSES,), hidden, dtype),
    }


@dataclass
class ModelBundle:
    """Named parameters plus the architecture facts needed to rebuild them."""

    params: dict[str, Tensor]
    variant: str = "simulation"
    channels: int = 10
    window: WindowSpec = field(default_factory=WindowSpec)
    meta: dict = field(default_factory=dict)

    @classmethod
    def create(
        cls,
        variant: str = "simulation",
        channels: int | None = None,
        window: WindowSpec | None = None,
        seed: int = 0,
        dtype=np.float32,
        with_decoder: bool = False,
    ) -> "ModelBundle":
        cfg = enc.EncoderConfig.for_variant(variant)
        channels = channels if channels is not None else (10 if variant == "simulation" else 53)
        window = window or WindowSpec()
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7]))
        arrays = enc.init_encoder(cfg, channels, window.win_len, rng, dtype)
        arrays.update(seqmodel.init_seqmodel(rng, cfg.embed_dim, dtype=dtype))
        arrays.update(seqmodel.init_critic(rng, cfg.embed_dim, dtype=dtype))
        arrays.update(init_head(rng, dtype=dtype))
        if with_decoder:
            arrays.update(enc.init_decoder(cfg, channels, window.win_len, rng, dtype))
        params = {k: Tensor(v, name=k) for k, v in arrays.items()}
        return cls(params, variant, channels, window, {"seed": int(seed)})

    @property
    def config(self) -> enc.EncoderConfig:
        return enc.EncoderConfig.for_variant(self.variant)

    def names(self, prefixes=None) -> list[str]:
        if prefixes is None:
            return list(self.params)
        return [k for k in self.params if k.startswith(tuple(prefixes))]

    def tensors(self, prefixes=None) -> list[Tensor]:
        return [self.params[k] for k in self.names(prefixes)]

    def set_trainable(self, prefixes=None) -> list[Tensor]:
        """Mark exactly the parameters under ``prefixes`` (all if None) as trainable."""
        keep = set(self.names(prefixes))
        for k, t in self.params.items():
            t.requires_grad = k in keep
            t.grad = None
        return [self.params[k] for k in self.params if k in keep]

    def astype(self, dtype) -> "ModelBundle":
        params = {k: Tensor(t.data.astype(dtype), name=k) for k, t in self.params.items()}
        return ModelBundle(params, self.variant, self.channels, self.window, dict(self.meta))

    def copy(self) -> "ModelBundle":
        return self.astype(next(iter(self.params.values())).dtype)

    def checksum(self, prefixes=None) -> str:
        h = hashlib.sha256()
        for k in sorted(self.names(prefixes)):
            h.update(k.encode())
            h.update(np.ascontiguousarray(self.params[k].data).tobytes())
        return h.hexdigest()

    def load_from(self, other: "ModelBundle", prefixes=PRETRAINED_PREFIXES) -> None:
        """Copy parameters under ``prefixes`` from ``other`` (shapes must agree)."""
        for k in self.names(prefixes):
            if k not in other.params:
                raise KeyError(f"source bundle has no tensor {k!r}")
            src = other.params[k].data
            if src.shape != self.params[k].shape:
                raise ValueError(f"tensor {k!r}: shape {src.shape} != {self.params[k].shape}")
            self.params[k].data = src.astype(self.params[k].dtype, copy=True)

    # ------------------------------------------------------------ forward

    def _dtype(self):
        return self.params["encoder.fc.weight"].dtype

    def windows(self, x: np.ndarray) -> np.ndarray:
        """(n, channels, length) -> (n, T, channels, win_len) in the model's dtype."""
        x = np.asarray(x)
        if x.ndim == 2:
            x = x[None]
        if x.shape[1] != self.channels:
            raise ValueError(f"model expects {self.channels} channels, got {x.shape[1]}")
        return np.ascontiguousarray(window_view(x, self.window), dtype=self._dtype())

    def encode(self, w) -> Tensor:
        """Windows (n, T, channels, win_len) -> local embeddings (n, T, 256)."""
        w = w if isinstance(w, Tensor) else Tensor(np.asarray(w, dtype=self._dtype()))
        n, T = w.shape[:2]
        flat = ops.reshape(w, (n * T,) + w.shape[2:])
        z = enc.encode(self.params, self.config, flat)
        return ops.reshape(z, (n, T, z.shape[-1]))

    def aggregate(self, z: Tensor) -> tuple[Tensor, Tensor]:
        c, alpha, _ = seqmodel.aggregate(self.params, z)
        return c, alpha

    def phi(self, z: Tensor) -> Tensor:
        return seqmodel.phi(self.params, z)

    def head(self, c: Tensor) -> Tensor:
        p = self.params
        h = ops.relu(ops.linear(c, p["head.fc0.weight"], p["head.fc0.bias"]))
        return ops.linear(h, p["head.fc1.weight"], p["head.fc1.bias"])

    def embed(self, w) -> tuple[Tensor, Tensor, Tensor]:
        """Windows -> (z, c, alpha)."""
        z = self.encode(w)
        c, alpha = self.aggregate(z)
        return z, c, alpha

    def logits(self, w) -> Tensor:
        return self.head(self.embed(w)[1])

    def reconstruct(self, flat_windows: Tensor) -> Tensor:
        """Autoencoder path: (n, channels, win_len) -> same shape."""
        if not any(k.startswith(DECODER_PREFIX) for k in self.params):
            raise ValueError("bundle has no decoder parameters")
        z = enc.encode(self.params, self.config, flat_windows)
        return enc.decode(self.params, self.config, z, self.window.win_len)
