"""Synthetic VAR / SVAR corpora.

Stable VAR(1) processes are simulated from sparse random transition matrices
rescaled to a fixed spectral radius. The SVAR class is a VAR series with a
random 20% of its time points removed, so some observed steps are two-step
transitions of the underlying process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_DENSITY = 0.3
DEFAULT_RADIUS = 0.9
DEFAULT_NOISE_STD = 1.0
SVAR_DROP_FRAC = 0.2
VAR, SVAR = 0, 1


def spectral_radius(a: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(a)))) if a.size else 0.0


def child_rng(seed: int, *path: int) -> np.random.Generator:
    """Independent stream for ``(seed, *path)``; distinct paths never share state."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))


def gen_stable_transition(
    n_nodes: int,
    density: float = DEFAULT_DENSITY,
    target_radius: float | None = DEFAULT_RADIUS,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Sparse Gaussian matrix rescaled so its spectral radius equals ``target_radius``.

    ``round(density * n_nodes**2)`` entries (at least one) are nonzero. Draws
    that come out nilpotent (radius 0) are redrawn. With ``target_radius=None``
    the raw draw is returned, which allows ``density=0``.
    """
    if n_nodes < 1:
        raise ValueError(f"n_nodes must be >= 1, got {n_nodes}")
    if not 0.0 <= density <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {density}")
    rng = rng if rng is not None else np.random.default_rng()
    n_cells = n_nodes * n_nodes
    if target_radius is None:
        a = np.zeros(n_cells)
        k = int(round(density * n_cells))
        a[rng.choice(n_cells, k, replace=False)] = rng.standard_normal(k)
        return a.reshape(n_nodes, n_nodes)
    if not 0.0 < target_radius < 1.0:
        raise ValueError(f"target_radius must lie in (0, 1), got {target_radius}")
    if density == 0.0:
        raise ValueError("density=0 gives the zero matrix, which cannot reach a positive radius")
    k = max(1, int(round(density * n_cells)))
    for _ in range(1000):
        a = np.zeros(n_cells)
        a[rng.choice(n_cells, k, replace=False)] = rng.standard_normal(k)
        a = a.reshape(n_nodes, n_nodes)
        rho = spectral_radius(a)
        if rho > 1e-6:
            return a * (target_radius / rho)
    raise RuntimeError(f"could not draw a non-nilpotent {n_nodes}x{n_nodes} matrix at density {density}")


def simulate_var(
    a: np.ndarray,
    length: int,
    noise_std: float = DEFAULT_NOISE_STD,
    rng: np.random.Generator | None = None,
    x0: np.ndarray | None = None,
) -> np.ndarray:
    """Simulate ``x_t = a @ x_{t-1} + eps_t`` and return a (n_nodes, length) array.

    ``x_0`` is drawn like the innovations, N(0, noise_std**2 I), unless given.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"transition matrix must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("transition matrix has non-finite entries")
    rho = spectral_radius(a)
    if rho >= 1.0:
        raise ValueError(f"transition matrix is not stable (spectral radius {rho:.6g} >= 1)")
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if noise_std < 0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")
    rng = rng if rng is not None else np.random.default_rng()
    n = a.shape[0]
    eps = noise_std * rng.standard_normal((length, n))
    x = np.empty((length, n))
    x[0] = eps[0] if x0 is None else x0
    for t in range(1, length):
        x[t] = a @ x[t - 1] + eps[t]
    return x.T.copy()


def kept_length(length: int, drop_frac: float) -> int:
    # guard against (1 - 0.2) * 250 = 200.00000000000003
    return math.ceil(round((1.0 - drop_frac) * length, 9))


def subsample_drop(ts: np.ndarray, drop_frac: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """Remove a uniformly random ``drop_frac`` of time points, keeping order."""
    if not 0.0 <= drop_frac < 1.0:
        raise ValueError(f"drop_frac must lie in [0, 1), got {drop_frac}")
    ts = np.asarray(ts)
    keep = kept_length(ts.shape[-1], drop_frac)
    return _keep_random(ts, keep, rng)


def _keep_random(ts: np.ndarray, keep: int, rng: np.random.Generator | None) -> np.ndarray:
    length = ts.shape[-1]
    if keep < 1:
        raise ValueError("subsampling would leave an empty series")
    if keep == length:
        return ts.copy()
    rng = rng if rng is not None else np.random.default_rng()
    idx = np.sort(rng.choice(length, keep, replace=False))
    return ts[..., idx]


def simulate_svar(
    a: np.ndarray,
    length: int,
    noise_std: float = DEFAULT_NOISE_STD,
    drop_frac: float = SVAR_DROP_FRAC,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """VAR of length ``ceil(length / (1 - drop_frac))`` subsampled to exactly ``length``."""
    rng = rng if rng is not None else np.random.default_rng()
    long_len = math.ceil(round(length / (1.0 - drop_frac), 9))
    full = simulate_var(a, long_len, noise_std, rng)
    out = subsample_drop(full, drop_frac, rng)
    if out.shape[-1] != length:
        out = _keep_random(out, length, rng)
    return out


# ------------------------------------------------------------------ corpora


@dataclass
class CorpusSeries:
    data: np.ndarray
    transition: np.ndarray
    # half-open column ranges
    train: tuple[int, int]
    val: tuple[int, int]
    test: tuple[int, int]
    series_id: int


def slice_bounds(length: int, ratios=(0.7, 0.15, 0.15)) -> tuple[tuple[int, int], tuple[int, int], tuple[int, int]]:
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"slice ratios must be three positive fractions summing to 1, got {ratios}")
    a = int(round(length * ratios[0]))
    b = a + int(round(length * ratios[1]))
    return (0, a), (a, b), (b, length)


def make_pretrain_corpus(
    n_series: int = 50,
    n_nodes: int = 10,
    length: int = 20000,
    rng: np.random.Generator | None = None,
    *,
    seed: int | None = None,
    ratios=(0.7, 0.15, 0.15),
    min_slice: int = 20,
    density: float = DEFAULT_DENSITY,
    target_radius: float = DEFAULT_RADIUS,
    noise_std: float = DEFAULT_NOISE_STD,
) -> list[CorpusSeries]:
    """Independent VAR series, each with a fresh transition matrix and
    contiguous train/val/test time slices. The series index is its identity label.

    Pass either ``rng`` or ``seed``; with ``seed`` each series draws from its
    own derived stream, so series can be generated independently.
    """
    if n_series < 1:
        raise ValueError("n_series must be >= 1")
    bounds = slice_bounds(length, ratios)
    short = min(hi - lo for lo, hi in bounds)
    if short < min_slice:
        raise ValueError(f"length {length} gives a slice of {short} points, fewer than one window ({min_slice})")
    if seed is None:
        rng = rng if rng is not None else np.random.default_rng()
        seeds = rng.integers(0, 2**63 - 1, size=n_series)
        streams = [np.random.default_rng(int(s)) for s in seeds]
    else:
        streams = [child_rng(seed, 0, i) for i in range(n_series)]
    corpus = []
    for i, r in enumerate(streams):
        a = gen_stable_transition(n_nodes, density, target_radius, r)
        x = simulate_var(a, length, noise_std, r)
        corpus.append(CorpusSeries(x, a, *bounds, series_id=i))
    return corpus


@dataclass
class LabeledDataset:
    samples: list[np.ndarray]
    labels: np.ndarray
    split: dict[str, np.ndarray] = field(default_factory=dict)
    ids: list[str] | None = None
    # index of the generating transition matrix in a shared pool, if any
    sources: list[int] | None = None

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.samples) != len(self.labels):
            raise ValueError(f"{len(self.samples)} samples but {len(self.labels)} labels")
        if self.samples:
            shape = self.samples[0].shape
            bad = [k for k, s in enumerate(self.samples) if s.shape != shape]
            if bad:
                raise ValueError(f"samples {bad[:5]} differ in shape from {shape}")
        if self.split:
            self.split = {k: np.asarray(v, dtype=np.int64) for k, v in self.split.items()}
            check_split(self.split, len(self.samples))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def channels(self) -> int:
        return self.samples[0].shape[0]

    @property
    def length(self) -> int:
        return self.samples[0].shape[1]

    def array(self, idx=None) -> np.ndarray:
        idx = range(len(self.samples)) if idx is None else idx
        return np.stack([self.samples[k] for k in idx])


def check_split(split: dict[str, np.ndarray], n: int) -> None:
    missing = {"train", "val", "test"} - set(split)
    if missing:
        raise ValueError(f"split is missing parts {sorted(missing)}")
    allidx = np.concatenate([split["train"], split["val"], split["test"]])
    if len(np.unique(allidx)) != len(allidx):
        raise ValueError("split parts overlap")
    if len(allidx) != n or (n and (allidx.min() < 0 or allidx.max() >= n)):
        raise ValueError(f"split does not cover exactly the {n} samples")


def stratified_split(labels: np.ndarray, rng: np.random.Generator, ratios=(0.8, 0.1, 0.1)) -> dict[str, np.ndarray]:
    labels = np.asarray(labels)
    parts: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        n_tr = int(round(ratios[0] * len(idx)))
        n_va = int(round(ratios[1] * len(idx)))
        parts["train"].extend(idx[:n_tr])
        parts["val"].extend(idx[n_tr : n_tr + n_va])
        parts["test"].extend(idx[n_tr + n_va :])
    return {k: np.sort(np.asarray(v, dtype=np.int64)) for k, v in parts.items()}


def make_downstream_dataset(
    n_samples: int = 2000,
    sample_len: int = 200,
    rng: np.random.Generator | None = None,
    *,
    seed: int | None = None,
    n_nodes: int = 10,
    win_len: int = 20,
    drop_frac: float = SVAR_DROP_FRAC,
    density: float = DEFAULT_DENSITY,
    target_radius: float = DEFAULT_RADIUS,
    noise_std: float = DEFAULT_NOISE_STD,
    pool: list[np.ndarray] | None = None,
) -> LabeledDataset:
    """Class-balanced VAR (label 0) vs SVAR (label 1) samples with an 80/10/10 split.

    Even indices are VAR, odd indices SVAR. Without ``pool`` every sample gets
    a fresh transition matrix; with ``pool`` each sample picks one of the given
    matrices uniformly at random, independently of its label.
    """
    if n_samples < 2 or n_samples % 2:
        raise ValueError(f"n_samples must be even and >= 2, got {n_samples}")
    if sample_len < win_len:
        raise ValueError(f"sample_len {sample_len} is shorter than the window length {win_len}")
    if seed is None:
        rng = rng if rng is not None else np.random.default_rng()
        seeds = rng.integers(0, 2**63 - 1, size=n_samples + 1)
        streams = [np.random.default_rng(int(s)) for s in seeds]
    else:
        streams = [child_rng(seed, 1, i) for i in range(n_samples + 1)]
    if pool is not None and (len(pool) == 0 or any(np.shape(a) != (n_nodes, n_nodes) for a in pool)):
        raise ValueError(f"pool must be a non-empty list of {n_nodes}x{n_nodes} matrices")
    samples, labels, sources = [], [], []
    for i in range(n_samples):
        r = streams[i]
        if pool is None:
            a = gen_stable_transition(n_nodes, density, target_radius, r)
            sources.append(-1)
        else:
            k = int(r.integers(len(pool)))
            a = pool[k]
            sources.append(k)
        label = i % 2
        if label == VAR:
            x = simulate_var(a, sample_len, noise_std, r)
        else:
            x = simulate_svar(a, sample_len, noise_std, drop_frac, r)
        samples.append(x)
        labels.append(label)
    split = stratified_split(np.array(labels), streams[-1])
    ids = [f"sample_{i:05d}" for i in range(n_samples)]
    return LabeledDataset(samples, np.array(labels), split, ids=ids, sources=sources if pool is not None else None)
