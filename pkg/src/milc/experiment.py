"""Config-driven data preparation for the command line and the demo scripts."""

from __future__ import annotations

from .config import ExperimentConfig
from .synth import CorpusSeries, LabeledDataset, make_downstream_dataset, make_pretrain_corpus
from .train import normalize_corpus, normalize_dataset
from .windows import WindowSpec


def window_spec(cfg: ExperimentConfig) -> WindowSpec:
    return WindowSpec(cfg.window.win_len, cfg.window.overlap)


def build_corpus(cfg: ExperimentConfig) -> list[CorpusSeries]:
    """Raw pre-training corpus for ``cfg.train.seed``."""
    s = cfg.synth
    return make_pretrain_corpus(
        s.n_series, s.n_nodes, s.length, seed=cfg.train.seed, ratios=s.slice_ratios,
        density=s.density, target_radius=s.target_radius, noise_std=s.noise_std,
    )


def build_downstream(cfg: ExperimentConfig, corpus: list[CorpusSeries] | None = None) -> LabeledDataset:
    """Raw VAR/SVAR dataset; with ``shared_pool`` its matrices come from the corpus."""
    s = cfg.synth
    pool = None
    if s.shared_pool:
        corpus = build_corpus(cfg) if corpus is None else corpus
        pool = [c.transition for c in corpus]
    return make_downstream_dataset(
        s.n_samples, s.sample_len, seed=cfg.train.seed, n_nodes=s.n_nodes, win_len=cfg.window.win_len,
        drop_frac=s.drop_frac, density=s.density, target_radius=s.target_radius, noise_std=s.noise_std, pool=pool,
    )


def prepare_corpus(corpus: list[CorpusSeries], cfg: ExperimentConfig) -> list[CorpusSeries]:
    return normalize_corpus(corpus) if cfg.train.standardize else corpus


def prepare_dataset(ds: LabeledDataset, cfg: ExperimentConfig) -> LabeledDataset:
    return normalize_dataset(ds) if cfg.train.standardize else ds
