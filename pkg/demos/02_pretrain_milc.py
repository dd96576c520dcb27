"""
Whole-sequence contrastive pre-training
=======================================

Each window is asked to pick out the sequence it came from among the other
sequences in the batch. Chance is 1/N; a few minutes of training on 20 series
gets well above it.
"""

import numpy as np

from milc import experiment
from milc.config import load_config
from milc.model import ModelBundle
from milc.train import assignment_eval, pretrain

# 20 series of 2000 steps, each with its own transition matrix
cfg = load_config(profile="quick", overrides={"synth": {"n_series": 20}, "train": {"pretrain_epochs": 40}})
corpus = experiment.prepare_corpus(experiment.build_corpus(cfg), cfg)
print(f"{len(corpus)} series, train/val/test slices {corpus[0].train} {corpus[0].val} {corpus[0].test}")

model = ModelBundle.create("simulation", channels=10, seed=0)
loss0, acc0 = assignment_eval(model, corpus, "test", cfg.train, seed=1)
print(f"before: held-out InfoNCE {loss0:.3f} (ln N = {np.log(len(corpus)):.3f}), assignment accuracy {acc0:.3f}")


def progress(epoch, train_loss, val_loss, val_acc):
    if epoch % 5 == 0:
        print(f"  epoch {epoch:3d}  train {train_loss:.3f}  val {val_loss:.3f}  val accuracy {val_acc:.3f}")


result = pretrain(corpus, model, cfg.train, on_epoch=progress)
loss1, acc1 = assignment_eval(result.model, corpus, "test", cfg.train, seed=1)
print(f"after (best epoch {result.best_epoch}): held-out InfoNCE {loss1:.3f}, assignment accuracy {acc1:.3f}, chance {1 / len(corpus):.3f}")
