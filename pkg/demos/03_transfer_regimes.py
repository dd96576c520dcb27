"""
Does pre-training help a small downstream task?
===============================================

Pre-train on a VAR corpus, then classify VAR vs SVAR with only a few labeled
samples. The npt model starts from scratch; fpt and ufpt start from the
pre-trained trunk, frozen or fine-tuned. Three trials each, so expect noise.
"""

import numpy as np

from milc import experiment
from milc.config import load_config
from milc.eval import build_learning_curve
from milc.model import ModelBundle
from milc.train import pretrain, run_trials

cfg = load_config(
    profile="quick",
    overrides={"synth": {"n_series": 50, "n_samples": 600}, "train": {"pretrain_epochs": 60, "trials": 3}},
)
raw = experiment.build_corpus(cfg)
corpus = experiment.prepare_corpus(raw, cfg)
ckpt = pretrain(corpus, ModelBundle.create(seed=0), cfg.train).model
print(f"pre-trained: best epoch {ckpt.meta['best_epoch']}, val assignment accuracy {ckpt.meta['val_acc']:.3f}")

# downstream samples reuse the corpus's transition matrices
data = experiment.prepare_dataset(experiment.build_downstream(cfg, raw), cfg)

reports = []
for n in (16, 64):
    for regime in ("npt", "fpt", "ufpt"):
        reports += run_trials(data, regime, n, None if regime == "npt" else ckpt, cfg.train)

print(f"{'regime':6s} {'n':>4s}  median  [min, max]")
for p in build_learning_curve(reports):
    print(f"{p.regime:6s} {p.n_train:4d}  {p.median:.3f}   [{p.min:.3f}, {p.max:.3f}]")
print("mean epochs run:", np.mean([r.epochs_run for r in reports]).round(1))
