import json
import math
from dataclasses import replace

import numpy as np
import pytest

from milc import train
from milc.config import TrainConfig
from milc.model import ModelBundle
from milc.synth import LabeledDataset, make_downstream_dataset, make_pretrain_corpus

FAST = TrainConfig(epochs=3, patience=2, pretrain_epochs=2, steps_per_epoch=2, batch_size=4, val_runs=1,
                   ae_epochs=2, ae_batch_windows=32, downstream_batch_size=8)


@pytest.fixture(scope="module")
def dataset():
    return train.normalize_dataset(make_downstream_dataset(40, 60, seed=3))


@pytest.fixture(scope="module")
def corpus():
    return train.normalize_corpus(make_pretrain_corpus(4, 10, 600, seed=2))


@pytest.fixture(scope="module")
def checkpoint(corpus):
    return train.pretrain(corpus, ModelBundle.create(seed=0), FAST).model


def same(a, b):
    """Report equality ignoring wall time (NaN-safe through JSON)."""
    return json.dumps(replace(a, wall_time=0).to_dict()) == json.dumps(replace(b, wall_time=0).to_dict())


class CountingDataset(LabeledDataset):
    def array(self, idx=None):
        self.reads.append(np.asarray(idx).tolist())
        return super().array(idx)


def test_fpt_leaves_pretrained_tensors_bit_identical(dataset, checkpoint):
    res = train.train_downstream(dataset, "fpt", 16, checkpoint, FAST, seed=1)
    assert res.audit["frozen_checksum_before"] == res.audit["frozen_checksum_after"]
    assert res.model.checksum(("encoder.", "lstm.", "attn.")) == checkpoint.checksum(("encoder.", "lstm.", "attn."))
    assert all(n.startswith("head.") for n in res.audit["trainable"])


def test_ufpt_updates_the_trunk(dataset, checkpoint):
    res = train.train_downstream(dataset, "ufpt", 16, checkpoint, replace(FAST, patience=5), seed=1)
    assert res.audit["frozen_checksum_before"] != res.audit["frozen_checksum_after"]


def test_hold_out_read_once_after_training(dataset):
    ds = CountingDataset(dataset.samples, dataset.labels, dataset.split, dataset.ids)
    ds.reads = []
    train.train_downstream(ds, "npt", 16, None, FAST, seed=2)
    test_idx = dataset.split["test"].tolist()
    touching = [k for k, r in enumerate(ds.reads) if set(r) & set(test_idx)]
    assert touching == [len(ds.reads) - 1]
    assert ds.reads[-1] == test_idx


def test_same_seed_same_report(dataset):
    a = train.train_downstream(dataset, "npt", 16, None, FAST, seed=7).report
    b = train.train_downstream(dataset, "npt", 16, None, FAST, seed=7).report
    assert same(a, b)


def test_regime_errors(dataset):
    with pytest.raises(ValueError, match="checkpoint"):
        train.train_downstream(dataset, "fpt", 16, None, FAST)
    with pytest.raises(ValueError, match="unknown regime"):
        train.train_downstream(dataset, "xyz", 16, None, FAST)
    with pytest.raises(ValueError, match="exceeds"):
        train.train_downstream(dataset, "npt", 10_000, None, FAST)


def test_epoch_log_written(dataset, tmp_path):
    train.train_downstream(dataset, "npt", 16, None, FAST, seed=1, log_path=tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_metric" and len(lines) >= 3


def test_pretrain_initial_loss_near_log_batch(corpus):
    cfg = replace(FAST, pretrain_epochs=1)
    res = train.pretrain(corpus, ModelBundle.create(seed=5), cfg)
    assert abs(res.log[0]["val_metric"] - math.log(len(corpus))) < 0.5
    assert res.model.meta["kind"] == "milc"


def test_pretrain_needs_two_sequences(corpus):
    with pytest.raises(ValueError, match="two sequences"):
        train.pretrain(corpus[:1], ModelBundle.create(seed=0), FAST)


def test_sample_runs_stay_inside_slice(corpus):
    r = np.random.default_rng(0)
    span = train.run_span(ModelBundle.create(seed=0).window, 13)
    assert span == 140
    runs = train.sample_runs(corpus, "val", ModelBundle.create(seed=0).window, 5, r)
    assert runs.shape == (4, 5, 10, 20)
    lo, hi = corpus[0].val
    first = runs[0, 0, :, 0]
    cols = np.where(np.all(np.isclose(corpus[0].data.T, first), axis=1))[0]
    assert lo <= cols[0] < hi


def test_autoencoder_reduces_reconstruction_error(corpus):
    res = train.pretrain_autoencoder(corpus, replace(FAST, ae_epochs=4))
    assert res.log[-1]["val_metric"] < res.log[0]["val_metric"]
    assert res.model.meta["kind"] == "autoencoder"


def test_ae_regime_loads_encoder_only(dataset, corpus):
    ae = train.pretrain_autoencoder(corpus, FAST).model
    res = train.train_downstream(dataset, "ae", 16, ae, replace(FAST, epochs=1), seed=4)
    fresh = ModelBundle.create(seed=4)
    assert res.report.regime == "ae"
    assert not any(n.startswith("decoder.") for n in res.model.names())
    assert fresh.checksum(("encoder.",)) != ae.checksum(("encoder.",))


def test_stratified_subsample_balanced():
    labels = np.array([0, 1] * 50)
    idx = train.stratified_subsample(labels, np.arange(100), 16, np.random.default_rng(0))
    assert len(idx) == 16 and labels[idx].sum() == 8 and len(set(idx)) == 16


def test_trial_seeds_distinct_and_stable():
    a = train.trial_seeds(0, 10)
    assert len(set(a)) == 10 and a == train.trial_seeds(0, 10)
    assert not set(a) & set(train.trial_seeds(1, 10))


def test_parallel_trials_match_sequential(dataset):
    cfg = replace(FAST, epochs=1)
    seq = train.run_trials(dataset, "npt", 16, None, cfg, n_trials=2, parallel=1)
    par = train.run_trials(dataset, "npt", 16, None, cfg, n_trials=2, parallel=2)
    assert all(same(a, b) for a, b in zip(seq, par)) and len(par) == 2
    assert [r.seed for r in seq] == train.trial_seeds(cfg.seed, 2)
