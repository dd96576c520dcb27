import json

import numpy as np
import pytest

from milc import io
from milc.cli import run

TINY = {
    "synth": {"n_series": 6, "length": 1200, "n_samples": 60, "sample_len": 80},
    "train": {"steps_per_epoch": 3, "batch_size": 6, "val_runs": 1, "patience": 3, "ae_batch_windows": 32},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "tiny.json").write_text(json.dumps(TINY))
    assert run(["synth", "--config", str(d / "tiny.json"), "--out", str(d / "data")]) == 0
    assert run(["pretrain", "--config", str(d / "tiny.json"), "--data", str(d / "data"), "--out", str(d / "m.mck"), "--epochs", "5"]) == 0
    return d


def cli(d, *args):
    return run([args[0], "--config", str(d / "tiny.json"), *args[1:]])


def test_end_to_end_smoke(workdir, capsys):
    d = workdir
    assert io.load_checkpoint(d / "m.mck").meta["kind"] == "milc"
    rc = cli(d, "downstream", "--regime", "npt", "--data", str(d / "data"), "--train-n", "32", "--trials", "2",
             "--epochs", "3", "--out", str(d / "npt.json"), "--save-model", str(d / "fit.mck"), "--log-dir", str(d / "logs"))
    assert rc == 0
    reports = json.loads((d / "npt.json").read_text())
    assert len(reports) == 2 and {r["regime"] for r in reports} == {"npt"}
    assert len(list((d / "logs").glob("*.csv"))) == 2
    assert cli(d, "downstream", "--regime", "fpt", "--ckpt", str(d / "m.mck"), "--data", str(d / "data"), "--train-n", "32",
               "--trials", "2", "--epochs", "3", "--out", str(d / "fpt.json")) == 0
    assert cli(d, "eval", "--reports", str(d / "npt.json"), str(d / "fpt.json"), "--out", str(d / "curve.csv"), "--json", str(d / "curve.json")) == 0
    assert (d / "curve.csv").read_text().splitlines()[0] == "regime,n_train,median,min,max,n_trials"
    assert set(json.loads((d / "curve.json").read_text())["series"]) == {"npt", "fpt"}
    sample = d / "data" / "downstream" / "sample_00003.mts"
    assert cli(d, "saliency", "--ckpt", str(d / "fit.mck"), "--sample", str(sample), "--out", str(d / "sal.csv")) == 0
    smap = np.loadtxt(d / "sal.csv", delimiter=",")
    assert smap.shape == (10, 80) and smap.max() == pytest.approx(1.0)
    side = json.loads((d / "sal.json").read_text())
    assert len(side["attention"]) == 7 and side["input_standardized"] is True


def test_reports_identical_modulo_wall_time(workdir):
    d = workdir
    outs = []
    for k in range(2):
        assert cli(d, "downstream", "--regime", "ufpt", "--ckpt", str(d / "m.mck"), "--data", str(d / "data"), "--train-n", "16",
                   "--trials", "2", "--epochs", "2", "--out", str(d / f"rep{k}.json")) == 0
        rows = json.loads((d / f"rep{k}.json").read_text())
        outs.append(json.dumps([{**r, "wall_time": 0} for r in rows]))
    assert outs[0] == outs[1]


def test_fpt_without_checkpoint_is_usage_error(workdir, capsys):
    d = workdir
    assert cli(d, "downstream", "--regime", "fpt", "--data", str(d / "data"), "--out", str(d / "x.json")) == 2
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("milc: error[usage]:") and "--ckpt" in err


def test_unknown_flag_exits_2(capsys):
    assert run(["gradcheck", "--no-such-flag"]) == 2
    assert "usage:" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    (tmp_path / "bad.json").write_text(json.dumps({"train": {"learning_rate": 1}}))
    assert run(["synth", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path / "o")]) == 2
    assert "learning_rate" in capsys.readouterr().err


def test_missing_data_dir(tmp_path, capsys):
    assert run(["pretrain", "--data", str(tmp_path), "--out", str(tmp_path / "m.mck")]) == 2
    assert "manifest" in capsys.readouterr().err


def test_corrupt_checkpoint_is_runtime_error(workdir, tmp_path, capsys):
    (tmp_path / "bad.mck").write_bytes(b"MILCCK1\x01")
    rc = run(["saliency", "--ckpt", str(tmp_path / "bad.mck"), "--sample", "x.mts", "--out", str(tmp_path / "s.csv")])
    assert rc == 1
    assert capsys.readouterr().err.strip().startswith("milc: error[format]:")


def test_seed_from_environment(workdir, monkeypatch, caplog):
    monkeypatch.setenv("MILC_SEED", "17")
    caplog.set_level("INFO", logger="milc.cli")
    assert cli(workdir, "synth", "--what", "pretrain", "--out", str(workdir / "env")) == 0
    assert "(seed 17)" in caplog.text


def test_gradcheck_green(capsys):
    assert run(["gradcheck"]) == 0
    out = capsys.readouterr().out
    for name in ("conv1d", "lstm_cell", "milc_loss", "saliency_logit"):
        assert name in out
    assert "all" in out.splitlines()[-1]
