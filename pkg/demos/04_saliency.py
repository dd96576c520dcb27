"""
Where in the sequence does the classifier look?
===============================================

Fit a small classifier, then take the gradient of its predicted logit with
respect to every input value. Time steps past the last full window never reach
the model and get exactly zero saliency.
"""

import numpy as np

from milc import experiment
from milc.config import load_config
from milc.saliency import saliency_map
from milc.train import train_downstream

cfg = load_config(profile="quick", overrides={"synth": {"sample_len": 205}, "train": {"epochs": 20}})
data = experiment.prepare_dataset(experiment.build_downstream(cfg), cfg)
fit = train_downstream(data, "npt", 96, None, cfg.train, seed=0)
print(f"validation AUC {fit.report.val_auc:.3f} after {fit.report.epochs_run} epochs")

sample = data.samples[int(data.split["test"][1])]
smap = saliency_map(fit.model, sample.astype(np.float32), sample_id="test_1")
print("predicted class:", smap.predicted_class, " logits:", np.round(smap.logits, 3))
print("map shape:", smap.map.shape, " tail (t >= 200) all zero:", not smap.raw[:, 200:].any())

# compare per-window saliency mass with the attention weights
mass = np.array([smap.raw[:, s : s + 20].sum() for s in smap.window_starts])
order = np.argsort(-mass)[:3]
print("top saliency windows:", smap.window_starts[order].tolist())
print("their attention:    ", np.round(smap.attention[order].astype(float), 3).tolist(), " (uniform would be", round(1 / len(mass), 3), ")")
print("busiest channel:", int(smap.raw.sum(axis=1).argmax()))
