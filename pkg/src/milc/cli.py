"""Command-line front end: synth, pretrain, downstream, eval, saliency, gradcheck.

Failures print one line ``milc: error[<category>]: <message>`` to stderr.
Exit codes: 0 ok, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, experiment, io
from .config import ConfigError, ExperimentConfig, load_config
from .eval import build_learning_curve, curve_to_csv, curve_to_series, dump_reports, load_reports
from .model import ModelBundle

log = logging.getLogger("milc.cli")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"milc: error[usage]: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="experiment config JSON")
    p.add_argument("--quick", action="store_true", help="desk-scale profile")
    p.add_argument("--seed", type=int, help="override train.seed")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="milc", description="Whole-sequence contrastive pre-training for multivariate time series.")
    parser.add_argument("--version", action="version", version=f"milc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate the VAR pre-training corpus and the VAR/SVAR dataset")
    _common(p)
    p.add_argument("--out", type=Path, required=True, help="output directory (pretrain/ and downstream/ inside)")
    p.add_argument("--what", choices=("both", "pretrain", "downstream"), default="both")

    p = sub.add_parser("pretrain", help="MILC (or autoencoder) pre-training")
    _common(p)
    p.add_argument("--data", type=Path, required=True, help="corpus directory written by 'synth'")
    p.add_argument("--out", type=Path, required=True, help="checkpoint path")
    p.add_argument("--method", choices=("milc", "autoencoder"), default="milc")
    p.add_argument("--epochs", type=int)
    p.add_argument("--log", type=Path, help="per-epoch CSV log")

    p = sub.add_parser("downstream", help="fit the classifier in one regime over several trials")
    _common(p)
    p.add_argument("--regime", choices=("npt", "ufpt", "fpt", "ae"), required=True)
    p.add_argument("--ckpt", type=Path, help="pre-trained checkpoint (required except for npt)")
    p.add_argument("--data", type=Path, required=True, help="dataset directory with manifest.json")
    p.add_argument("--train-n", type=int, help="training subset size")
    p.add_argument("--trials", type=int)
    p.add_argument("--parallel", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", type=Path, required=True, help="report JSON")
    p.add_argument("--log-dir", type=Path, help="per-trial epoch CSVs")
    p.add_argument("--save-model", type=Path, help="checkpoint of the first trial's fitted model")

    p = sub.add_parser("eval", help="aggregate trial reports into a learning curve")
    _common(p)
    p.add_argument("--reports", type=Path, nargs="+", required=True)
    p.add_argument("--out", type=Path, required=True, help="learning-curve CSV")
    p.add_argument("--json", type=Path, help="plot-ready series JSON")
    p.add_argument("--external", type=Path, help="JSON {name: [{n_train, median, min, max}, ...]} to plot alongside")

    p = sub.add_parser("saliency", help="input-gradient saliency map for one sample")
    _common(p)
    p.add_argument("--ckpt", type=Path, required=True, help="fitted downstream checkpoint")
    p.add_argument("--sample", type=Path, required=True, help=".mts time-series file")
    p.add_argument("--out", type=Path, required=True, help="map CSV (channels x time); sidecar JSON next to it")

    p = sub.add_parser("gradcheck", help="finite-difference check of every op and model path")
    _common(p)
    p.add_argument("--tol", type=float, default=1e-4)
    return parser


def _resolve(args) -> ExperimentConfig:
    overrides: dict = {"train": {}}
    if args.seed is not None:
        overrides["train"]["seed"] = args.seed
    for flag, key in (("trials", "trials"), ("parallel", "parallel"), ("train_n", "n_train")):
        if getattr(args, flag, None) is not None:
            overrides["train"][key] = getattr(args, flag)
    if getattr(args, "epochs", None) is not None:
        if args.command == "downstream":
            overrides["train"]["epochs"] = args.epochs
        elif getattr(args, "method", "milc") == "autoencoder":
            overrides["train"]["ae_epochs"] = args.epochs
        else:
            overrides["train"]["pretrain_epochs"] = args.epochs
    cfg = load_config(args.config, "quick" if args.quick else None, overrides)
    log.info("resolved config (seed %d): %s", cfg.train.seed, json.dumps(cfg.to_dict(), sort_keys=True))
    return cfg


def _data_dir(path: Path, kind: str) -> Path:
    if (path / "manifest.json").exists():
        return path
    if (path / kind / "manifest.json").exists():
        return path / kind
    raise UsageError(f"no manifest.json in {path} or {path / kind}")


def cmd_synth(args, cfg: ExperimentConfig) -> int:
    corpus = experiment.build_corpus(cfg)
    if args.what in ("both", "pretrain"):
        io.save_corpus(corpus, args.out / "pretrain", cfg.to_dict())
        print(f"wrote {len(corpus)} series to {args.out / 'pretrain'}")
    if args.what in ("both", "downstream"):
        ds = experiment.build_downstream(cfg, corpus)
        io.save_downstream(ds, args.out / "downstream", cfg.to_dict())
        sizes = {k: len(v) for k, v in ds.split.items()}
        print(f"wrote {len(ds)} samples {sizes} to {args.out / 'downstream'}")
    return EXIT_OK


def cmd_pretrain(args, cfg: ExperimentConfig) -> int:
    from .train import pretrain, pretrain_autoencoder

    corpus = experiment.prepare_corpus(io.load_corpus(_data_dir(args.data, "pretrain")), cfg)
    window = experiment.window_spec(cfg)
    if args.method == "autoencoder":
        res = pretrain_autoencoder(corpus, cfg.train, window, log_path=args.log)
        summary = f"best epoch {res.best_epoch}, val mse {res.val_loss:.4f}"
    else:
        model = ModelBundle.create(cfg.train.variant, corpus[0].data.shape[0], window, seed=cfg.train.seed)
        res = pretrain(corpus, model, cfg.train, log_path=args.log)
        summary = f"best epoch {res.best_epoch}, val loss {res.val_loss:.4f}, assignment accuracy {res.val_acc:.3f}"
    res.model.meta["standardize"] = cfg.train.standardize
    io.save_checkpoint(res.model, args.out)
    print(f"{summary}; checkpoint {args.out}")
    return EXIT_OK


def _write_epoch_csv(path: Path, rows: list[dict]) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(io.EpochLog.columns)
    for row in rows:
        w.writerow([row[c] for c in io.EpochLog.columns])
    io.atomic_write_text(path, buf.getvalue())


def cmd_downstream(args, cfg: ExperimentConfig) -> int:
    from .train import run_trials

    if args.regime != "npt" and args.ckpt is None:
        raise UsageError(f"--ckpt is required for regime {args.regime}")
    expected = {"ufpt": "milc", "fpt": "milc", "ae": "autoencoder"}.get(args.regime)
    ckpt = None
    if args.ckpt is not None:
        ckpt = io.load_checkpoint(args.ckpt, expected_variant=cfg.train.variant)
        kind = ckpt.meta.get("kind")
        if expected and kind != expected:
            raise UsageError(f"regime {args.regime} needs a {expected} checkpoint, {args.ckpt} is {kind!r}")
        if ckpt.meta.get("standardize", cfg.train.standardize) != cfg.train.standardize:
            log.warning("checkpoint standardize=%s differs from config", ckpt.meta.get("standardize"))
    ds = experiment.prepare_dataset(io.ingest_timecourses(_data_dir(args.data, "downstream")), cfg)
    window = None if ckpt is not None else experiment.window_spec(cfg)
    keep = args.save_model is not None
    results = run_trials(ds, args.regime, cfg.train.n_train, ckpt, cfg.train, window=window, keep_models=keep)
    reports = [r.report for r in results] if keep else results
    if args.log_dir:
        for r in reports:
            _write_epoch_csv(args.log_dir / f"{r.regime}_n{r.n_train}_seed{r.seed}.csv", r.curve)
    dump_reports(reports, args.out)
    if keep:
        model = results[0].model
        model.meta["standardize"] = cfg.train.standardize
        io.save_checkpoint(model, args.save_model)
    aucs = np.array([r.test_auc for r in reports])
    print(f"{args.regime} n_train={cfg.train.n_train}: median test AUC {np.median(aucs):.3f} (min {aucs.min():.3f}, max {aucs.max():.3f}) over {len(aucs)} trials")
    return EXIT_OK


def cmd_eval(args, cfg: ExperimentConfig) -> int:
    reports = [r for p in args.reports for r in load_reports(p)]
    points = build_learning_curve(reports)
    text = curve_to_csv(points)
    io.atomic_write_text(args.out, text)
    if args.json:
        external = json.loads(args.external.read_text()) if args.external else None
        io.write_json(args.json, curve_to_series(points, external))
    sys.stdout.write(text)
    return EXIT_OK


def cmd_saliency(args, cfg: ExperimentConfig) -> int:
    from .saliency import saliency_map
    from .train import zscore

    model = io.load_checkpoint(args.ckpt)
    x = io.read_timeseries(args.sample)
    standardized = bool(model.meta.get("standardize", False))
    if standardized:
        x = zscore(x).astype(np.float32)
    smap = saliency_map(model, x, sample_id=args.sample.stem)
    buf = _io.StringIO()
    np.savetxt(buf, smap.map, delimiter=",", fmt="%.8g")
    io.atomic_write_text(args.out, buf.getvalue())
    side = {**smap.sidecar(), "input_standardized": standardized, "shape": list(smap.map.shape)}
    io.write_json(args.out.with_suffix(".json"), side)
    print(f"class {smap.predicted_class}; map {smap.map.shape[0]}x{smap.map.shape[1]} -> {args.out}")
    return EXIT_OK


def cmd_gradcheck(args, cfg: ExperimentConfig) -> int:
    from .gradsuite import full_suite

    errors = full_suite(cfg.train.seed)
    width = max(map(len, errors))
    for name, err in errors.items():
        print(f"{name:<{width}}  {err:.3e}  {'ok' if err < args.tol else 'FAIL'}")
    worst = max(errors, key=errors.get)
    ok = errors[worst] < args.tol
    print(f"{'all' if ok else 'NOT all'} {len(errors)} checks below {args.tol:g} (worst: {worst} {errors[worst]:.3e})")
    return EXIT_OK if ok else EXIT_RUNTIME


COMMANDS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "downstream": cmd_downstream,
    "eval": cmd_eval,
    "saliency": cmd_saliency,
    "gradcheck": cmd_gradcheck,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if not args.verbose:
        log.setLevel(logging.INFO)
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"milc: error[usage]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except io.FormatError as exc:
        print(f"milc: error[format]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"milc: error[runtime]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
