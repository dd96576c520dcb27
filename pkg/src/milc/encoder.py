"""CNN window encoder (and the mirrored decoder used by the autoencoder baseline)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import Tensor, ops

EMBED_DIM = 256


@dataclass(frozen=True)
class EncoderConfig:
    variant: str = "simulation"
    conv_features: tuple[int, ...] = (32, 64, 128, 64)
    kernel_sizes: tuple[int, ...] = (4, 4, 3, 2)
    embed_dim: int = EMBED_DIM

    @classmethod
    def for_variant(cls, variant: str) -> "EncoderConfig":
        if variant == "simulation":
            return cls("simulation", (32, 64, 128, 64), (4, 4, 3, 2))
        if variant == "real":
            return cls("real", (64, 128, 200), (4, 4, 3))
        raise ValueError(f"unknown encoder variant {variant!r} (expected 'simulation' or 'real')")

    def conv_lengths(self, win_len: int) -> list[int]:
        """Output length after each valid conv: L -> L - k + 1."""
        out, n = [], win_len
        for k in self.kernel_sizes:
            n = n - k + 1
            out.append(n)
        return out

    def min_win_len(self) -> int:
        return sum(k - 1 for k in self.kernel_sizes) + 1

    def flat_dim(self, win_len: int) -> int:
        return self.conv_features[-1] * self.conv_lengths(win_len)[-1]


def uniform_fan_in(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_encoder(cfg: EncoderConfig, channels: int, win_len: int, rng: np.random.Generator, dtype=np.float32) -> dict[str, np.ndarray]:
    if win_len < cfg.min_win_len():
        raise ValueError(f"win_len {win_len} too short for kernels {cfg.kernel_sizes}")
    params = {}
    c_in = channels
    for k, (c_out, ks) in enumerate(zip(cfg.conv_features, cfg.kernel_sizes)):
        fan = c_in * ks
        params[f"encoder.conv{k}.weight"] = uniform_fan_in(rng, (c_out, c_in, ks), fan, dtype)
        params[f"encoder.conv{k}.bias"] = uniform_fan_in(rng, (c_out,), fan, dtype)
        c_in = c_out
    flat = cfg.flat_dim(win_len)
    params["encoder.fc.weight"] = uniform_fan_in(rng, (cfg.embed_dim, flat), flat, dtype)
    params["encoder.fc.bias"] = uniform_fan_in(rng, (cfg.embed_dim,), flat, dtype)
    return params


def encode(p: dict[str, Tensor], cfg: EncoderConfig, x: Tensor) -> Tensor:
    """Windows (batch, channels, win_len) -> local embeddings (batch, embed_dim).

    conv -> ReLU per layer, flatten channel-major, then one linear layer with
    no activation.
    """
    expected = p["encoder.conv0.weight"].shape[1]
    if x.data.ndim != 3 or x.shape[1] != expected:
        raise ValueError(f"encoder expects windows of shape (batch, {expected}, win_len), got {x.shape}")
    if x.shape[2] < cfg.min_win_len():
        raise ValueError(f"window length {x.shape[2]} too short for kernels {cfg.kernel_sizes}")
    h = ops.transpose(x, (0, 2, 1))
    for k in range(len(cfg.kernel_sizes)):
        h = ops.relu(ops.conv1d(h, p[f"encoder.conv{k}.weight"], p[f"encoder.conv{k}.bias"], layout="nlc"))
    # flatten channel-major: (batch, channels, time) order
    h = ops.reshape(ops.transpose(h, (0, 2, 1)), (h.shape[0], -1))
    if h.shape[1] != p["encoder.fc.weight"].shape[1]:
        raise ValueError(f"flattened conv output {h.shape[1]} does not match encoder.fc input {p['encoder.fc.weight'].shape[1]}")
    return ops.linear(h, p["encoder.fc.weight"], p["encoder.fc.bias"])


def init_decoder(cfg: EncoderConfig, channels: int, win_len: int, rng: np.random.Generator, dtype=np.float32) -> dict[str, np.ndarray]:
    """Reverse of the encoder: linear back to the flat conv map, then transposed
    convs walking the feature/length ladder backwards to (channels, win_len)."""
    params = {}
    flat = cfg.flat_dim(win_len)
    params["decoder.fc.weight"] = uniform_fan_in(rng, (flat, cfg.embed_dim), cfg.embed_dim, dtype)
    params["decoder.fc.bias"] = uniform_fan_in(rng, (flat,), cfg.embed_dim, dtype)
    feats = list(cfg.conv_features[::-1]) + [channels]
    kernels = cfg.kernel_sizes[::-1]
    for k, ks in enumerate(kernels):
        c_in, c_out = feats[k], feats[k + 1]
        fan = c_in * ks
        params[f"decoder.deconv{k}.weight"] = uniform_fan_in(rng, (c_in, c_out, ks), fan, dtype)
        params[f"decoder.deconv{k}.bias"] = uniform_fan_in(rng, (c_out,), fan, dtype)
    return params


def decode(p: dict[str, Tensor], cfg: EncoderConfig, z: Tensor, win_len: int) -> Tensor:
    last_len = cfg.conv_lengths(win_len)[-1]
    h = ops.linear(z, p["decoder.fc.weight"], p["decoder.fc.bias"])
    h = ops.reshape(h, (h.shape[0], cfg.conv_features[-1], last_len))
    n = len(cfg.kernel_sizes)
    for k in range(n):
        h = ops.relu(h)
        h = ops.conv_transpose1d(h, p[f"decoder.deconv{k}.weight"], p[f"decoder.deconv{k}.bias"])
    return h
