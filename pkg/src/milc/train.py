"""Pre-training and downstream fitting, including the autoencoder baseline."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import objective
from .config import TrainConfig
from .diffcore import Adam, Tape, Tensor, ops
from .eval import TrialReport, roc_auc
from .io import EpochLog
from .model import ENCODER_PREFIX, HEAD_PREFIX, PRETRAINED_PREFIXES, ModelBundle
from .synth import CorpusSeries, LabeledDataset, child_rng
from .windows import WindowSpec, window_view

log = logging.getLogger(__name__)

REGIMES = ("npt", "ufpt", "fpt", "ae")
DOWNSTREAM_PREFIXES = ("encoder.", "lstm.", "attn.", "head.")


def zscore(x: np.ndarray, ref: np.ndarray | None = None) -> np.ndarray:
    """Standardize each channel (last axis is time), using ``ref``'s statistics if given."""
    ref = x if ref is None else ref
    mu = ref.mean(axis=-1, keepdims=True)
    sd = ref.std(axis=-1, keepdims=True)
    return (x - mu) / np.where(sd > 0, sd, 1.0)


def normalize_corpus(corpus: list[CorpusSeries]) -> list[CorpusSeries]:
    out = []
    for s in corpus:
        lo, hi = s.train
        out.append(CorpusSeries(zscore(s.data, s.data[:, lo:hi]), s.transition, s.train, s.val, s.test, s.series_id))
    return out


def normalize_dataset(ds: LabeledDataset) -> LabeledDataset:
    return LabeledDataset([zscore(x) for x in ds.samples], ds.labels, ds.split, ds.ids, ds.sources)


# ------------------------------------------------------------- pre-training


def run_span(window: WindowSpec, n_windows: int) -> int:
    return (n_windows - 1) * window.stride + window.win_len


def sample_runs(corpus, part: str, window: WindowSpec, n_windows: int, rng, seq_idx=None) -> np.ndarray:
    """One random contiguous run of ``n_windows`` windows per sequence -> (N, T, C, W)."""
    seq_idx = range(len(corpus)) if seq_idx is None else seq_idx
    span = run_span(window, n_windows)
    runs = []
    for i in seq_idx:
        s = corpus[i]
        lo, hi = getattr(s, part)
        if hi - lo < span:
            raise ValueError(f"series {s.series_id} {part} slice has {hi - lo} points, a {n_windows}-window run needs {span}")
        start = lo + int(rng.integers(0, hi - lo - span + 1))
        runs.append(window_view(s.data[:, start : start + span], window))
    return np.stack(runs)


def windows_for(corpus, part: str, window: WindowSpec, wanted: int) -> int:
    """Largest run length <= ``wanted`` that fits every sequence's ``part`` slice."""
    shortest = min(getattr(s, part)[1] - getattr(s, part)[0] for s in corpus)
    fit = window.count(shortest)
    if fit < 1:
        raise ValueError(f"{part} slices ({shortest} points) cannot hold one window of {window.win_len}")
    return min(wanted, fit)


def milc_scores(model: ModelBundle, w) -> tuple[Tensor, int]:
    z, c, _ = model.embed(w)
    u = model.phi(z)
    return objective.critic_scores(u, c), z.shape[1]


def assignment_eval(model: ModelBundle, corpus, part: str, cfg: TrainConfig, seed: int, n_runs: int | None = None) -> tuple[float, float]:
    """(InfoNCE loss, assignment accuracy) with every sequence as a candidate, averaged over fixed runs."""
    n_runs = cfg.val_runs if n_runs is None else n_runs
    T = windows_for(corpus, part, model.window, cfg.windows_per_example)
    rng = child_rng(seed, 99)
    losses, accs = [], []
    for _ in range(n_runs):
        w = sample_runs(corpus, part, model.window, T, rng).astype(model._dtype())
        s, T_ = milc_scores(model, w)
        losses.append(float(objective.infonce_loss(s, T_).data))
        accs.append(objective.assignment_accuracy(s, T_))
    return float(np.mean(losses)), float(np.mean(accs))


@dataclass
class PretrainResult:
    model: ModelBundle
    log: list[dict]
    best_epoch: int
    val_loss: float
    val_acc: float


def pretrain(corpus: list[CorpusSeries], model: ModelBundle, cfg: TrainConfig, log_path=None, on_epoch=None) -> PretrainResult:
    """MILC pre-training with early stopping on validation InfoNCE.

    Each step draws ``batch_size`` distinct sequences and one random run of
    ``windows_per_example`` windows from each training slice; the other
    sequences in the batch supply the negatives.
    """
    n = len(corpus)
    if n < 2:
        raise ValueError("pre-training needs at least two sequences (InfoNCE has no negatives otherwise)")
    batch = min(cfg.batch_size, n)
    if batch < 2:
        raise ValueError("batch_size must be >= 2 for pre-training")
    T = windows_for(corpus, "train", model.window, cfg.windows_per_example)
    rng = child_rng(cfg.seed, 11)
    params = model.set_trainable(PRETRAINED_PREFIXES)
    opt = Adam(params, lr=cfg.lr_pretrain)
    elog = EpochLog(log_path)

    val_loss, val_acc = assignment_eval(model, corpus, "val", cfg, cfg.seed)
    elog.append(0, float("nan"), val_loss)
    best = (val_loss, val_acc, 0, model.copy())
    stale = 0
    for epoch in range(1, cfg.pretrain_epochs + 1):
        losses = []
        for _ in range(cfg.steps_per_epoch):
            idx = rng.choice(n, batch, replace=False)
            w = sample_runs(corpus, "train", model.window, T, rng, idx).astype(model._dtype())
            with Tape() as tape:
                s, T_ = milc_scores(model, w)
                loss = objective.infonce_loss(s, T_)
            tape.backward(loss)
            opt.step()
            opt.zero_grad()
            losses.append(float(loss.data))
        val_loss, val_acc = assignment_eval(model, corpus, "val", cfg, cfg.seed)
        elog.append(epoch, float(np.mean(losses)), val_loss)
        log.info("pretrain epoch %d train %.4f val %.4f acc %.3f", epoch, np.mean(losses), val_loss, val_acc)
        if on_epoch:
            on_epoch(epoch, float(np.mean(losses)), val_loss, val_acc)
        if val_loss < best[0]:
            best = (val_loss, val_acc, epoch, model.copy())
            stale = 0
        else:
            stale += 1
            if stale >= cfg.pretrain_patience:
                break
    model.set_trainable(())
    best_model = best[3]
    best_model.meta.update({"kind": "milc", "seed": cfg.seed, "best_epoch": best[2], "val_loss": best[0], "val_acc": best[1]})
    return PretrainResult(best_model, elog.rows, best[2], best[0], best[1])


# ------------------------------------------------------------ autoencoder


def corpus_windows(corpus, part: str, window: WindowSpec) -> np.ndarray:
    """All windows of every sequence's ``part`` slice, stacked to (M, C, W)."""
    out = []
    for s in corpus:
        lo, hi = getattr(s, part)
        if hi - lo >= window.win_len:
            out.append(window_view(s.data[:, lo:hi], window))
    return np.concatenate(out)


def pretrain_autoencoder(corpus: list[CorpusSeries], cfg: TrainConfig, window: WindowSpec = WindowSpec(), log_path=None, max_windows: int | None = None) -> PretrainResult:
    """Window reconstruction (MSE) through encoder -> mirrored decoder."""
    if cfg.variant != "simulation":
        raise ValueError("the autoencoder baseline is defined for the simulation encoder only")
    channels = corpus[0].data.shape[0]
    if channels != 10:
        raise ValueError(f"autoencoder baseline expects 10-channel simulation data, got {channels}")
    model = ModelBundle.create("simulation", channels, window, seed=cfg.seed, with_decoder=True)
    rng = child_rng(cfg.seed, 12)
    train_w = corpus_windows(corpus, "train", window).astype(np.float32)
    val_w = corpus_windows(corpus, "val", window).astype(np.float32)
    if max_windows is not None:
        val_w = val_w[rng.permutation(len(val_w))[:max_windows]]
    params = model.set_trainable((ENCODER_PREFIX, "decoder."))
    opt = Adam(params, lr=cfg.lr_autoencoder)
    elog = EpochLog(log_path)

    def val_mse() -> float:
        errs = [float(ops.mse(model.reconstruct(Tensor(val_w[k : k + 1024])), val_w[k : k + 1024]).data) * len(val_w[k : k + 1024]) for k in range(0, len(val_w), 1024)]
        return float(np.sum(errs) / len(val_w))

    best = (val_mse(), 0, model.copy())
    elog.append(0, float("nan"), best[0])
    stale = 0
    for epoch in range(1, cfg.ae_epochs + 1):
        losses = []
        for _ in range(cfg.steps_per_epoch):
            idx = rng.choice(len(train_w), min(cfg.ae_batch_windows, len(train_w)), replace=False)
            xb = train_w[idx]
            with Tape() as tape:
                loss = ops.mse(model.reconstruct(Tensor(xb)), xb)
            tape.backward(loss)
            opt.step()
            opt.zero_grad()
            losses.append(float(loss.data))
        v = val_mse()
        elog.append(epoch, float(np.mean(losses)), v)
        log.info("autoencoder epoch %d train %.4f val %.4f", epoch, np.mean(losses), v)
        if v < best[0]:
            best = (v, epoch, model.copy())
            stale = 0
        else:
            stale += 1
            if stale >= cfg.ae_patience:
                break
    model.set_trainable(())
    best_model = best[2]
    best_model.meta.update({"kind": "autoencoder", "seed": cfg.seed, "best_epoch": best[1], "val_mse": best[0]})
    return PretrainResult(best_model, elog.rows, best[1], best[0], float("nan"))


# ---------------------------------------------------------------- downstream


def stratified_subsample(labels: np.ndarray, pool: np.ndarray, n: int, rng) -> np.ndarray:
    """``n`` indices from ``pool`` with classes as balanced as ``pool`` allows."""
    pool = np.asarray(pool)
    if n > len(pool):
        raise ValueError(f"n_train={n} exceeds the {len(pool)} available training samples")
    classes = np.unique(labels[pool])
    by_class = [rng.permutation(pool[labels[pool] == c]) for c in classes]
    share = [n // len(classes) + (1 if k < n % len(classes) else 0) for k in range(len(classes))]
    # move any shortfall of a small class onto the others
    for k, grp in enumerate(by_class):
        short = share[k] - len(grp)
        if short > 0:
            share[k] = len(grp)
            for j in range(len(classes)):
                room = len(by_class[j]) - share[j]
                take = min(room, short)
                share[j] += take
                short -= take
    picked = np.concatenate([grp[:s] for grp, s in zip(by_class, share)])
    return np.sort(picked)


def _logit_scores(model: ModelBundle, w: np.ndarray, chunk: int = 128) -> np.ndarray:
    out = []
    for k in range(0, len(w), chunk):
        lg = model.logits(w[k : k + chunk]).data
        out.append(lg[:, 1] - lg[:, 0])
    return np.concatenate(out)


def _head_scores(model: ModelBundle, c: np.ndarray) -> np.ndarray:
    lg = model.head(Tensor(c)).data
    return lg[:, 1] - lg[:, 0]


def _global_embeddings(model: ModelBundle, w: np.ndarray, chunk: int = 128) -> np.ndarray:
    return np.concatenate([model.embed(w[k : k + chunk])[1].data for k in range(0, len(w), chunk)])


@dataclass
class DownstreamResult:
    model: ModelBundle
    report: TrialReport
    audit: dict = field(default_factory=dict)


def train_downstream(
    dataset: LabeledDataset,
    regime: str,
    n_train: int,
    checkpoint: ModelBundle | None,
    cfg: TrainConfig,
    seed: int | None = None,
    log_path=None,
    window: WindowSpec | None = None,
) -> DownstreamResult:
    """Fit the classifier in one regime and score the hold-out once.

    npt: random init, all trainable. ufpt: encoder/biLSTM/attention from the
    checkpoint, all trainable. fpt: same init, only the head trains. ae: encoder
    from an autoencoder checkpoint, the rest random, all trainable.
    """
    regime = regime.lower()
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")
    if regime != "npt" and checkpoint is None:
        raise ValueError(f"regime {regime} needs a pre-trained checkpoint")
    seed = cfg.seed if seed is None else seed
    t0 = time.perf_counter()
    rng = child_rng(seed, 21)
    labels = dataset.labels
    tr_idx = stratified_subsample(labels, dataset.split["train"], n_train, rng)
    va_idx = dataset.split["val"]
    if len(np.unique(labels[va_idx])) < 2:
        raise ValueError("validation split must contain both classes")

    if checkpoint is not None:
        if window is not None and window != checkpoint.window:
            raise ValueError(f"window {window} differs from the checkpoint's {checkpoint.window}")
        window = checkpoint.window
    window = window or WindowSpec()
    variant = checkpoint.variant if checkpoint is not None else cfg.variant
    model = ModelBundle.create(variant, dataset.channels, window, seed=seed)
    if regime in ("ufpt", "fpt"):
        model.load_from(checkpoint, ("encoder.", "lstm.", "attn."))
    elif regime == "ae":
        model.load_from(checkpoint, (ENCODER_PREFIX,))
    frozen_sum = model.checksum(("encoder.", "lstm.", "attn."))

    trainable = model.set_trainable((HEAD_PREFIX,) if regime == "fpt" else DOWNSTREAM_PREFIXES)
    lr = cfg.lr_head if regime == "fpt" else cfg.lr_downstream
    opt = Adam(trainable, lr=lr)
    elog = EpochLog(log_path)

    w_tr = model.windows(dataset.array(tr_idx))
    w_va = model.windows(dataset.array(va_idx))
    y_tr, y_va = labels[tr_idx], labels[va_idx]
    if regime == "fpt":
        # the frozen trunk is deterministic, so embed once
        c_tr, c_va = _global_embeddings(model, w_tr), _global_embeddings(model, w_va)

    def val_auc() -> float:
        s = _head_scores(model, c_va) if regime == "fpt" else _logit_scores(model, w_va)
        return roc_auc(s, y_va)

    best_auc, best_epoch, best_params = val_auc(), 0, model.copy()
    elog.append(0, float("nan"), best_auc)
    stale, epochs_run = 0, 0
    bs = cfg.downstream_batch_size
    for epoch in range(1, cfg.epochs + 1):
        epochs_run = epoch
        order = rng.permutation(len(tr_idx))
        losses = []
        for k in range(0, len(order), bs):
            b = order[k : k + bs]
            with Tape() as tape:
                logits = model.head(Tensor(c_tr[b])) if regime == "fpt" else model.logits(w_tr[b])
                loss = ops.cross_entropy(logits, y_tr[b])
            tape.backward(loss)
            opt.step()
            opt.zero_grad()
            losses.append(float(loss.data) * len(b))
        auc = val_auc()
        elog.append(epoch, float(np.sum(losses) / len(order)), auc)
        if auc > best_auc:
            best_auc, best_epoch, best_params = auc, epoch, model.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.set_trainable(())
    best_params.meta.update({"kind": "downstream", "regime": regime, "seed": seed, "best_epoch": best_epoch})

    # single read of the hold-out, after training has stopped
    te_idx = dataset.split["test"]
    w_te = best_params.windows(dataset.array(te_idx))
    test_auc = roc_auc(_logit_scores(best_params, w_te), labels[te_idx])

    audit = {
        "frozen_checksum_before": frozen_sum,
        "frozen_checksum_after": model.checksum(("encoder.", "lstm.", "attn.")),
        "trainable": [t.name for t in trainable],
    }
    report = TrialReport(
        seed=int(seed),
        regime=regime,
        n_train=int(n_train),
        epochs_run=epochs_run,
        val_auc=float(best_auc),
        test_auc=float(test_auc),
        wall_time=time.perf_counter() - t0,
        curve=elog.rows,
    )
    return DownstreamResult(best_params, report, audit)


def trial_seeds(base_seed: int, n_trials: int) -> list[int]:
    """Distinct per-trial seeds derived from ``base_seed``."""
    ss = np.random.SeedSequence([int(base_seed), 31])
    seeds = [int(s.generate_state(1, dtype=np.uint32)[0]) for s in ss.spawn(n_trials)]
    if len(set(seeds)) != n_trials:
        raise RuntimeError("derived trial seeds collided")
    return seeds


def _run_one(args):
    dataset, regime, n_train, checkpoint, cfg, seed, window, keep = args
    res = train_downstream(dataset, regime, n_train, checkpoint, cfg, seed, window=window)
    return res if keep else res.report


def run_trials(
    dataset,
    regime: str,
    n_train: int,
    checkpoint,
    cfg: TrainConfig,
    n_trials: int | None = None,
    parallel: int | None = None,
    window: WindowSpec | None = None,
    keep_models: bool = False,
) -> list:
    """Independent trials with derived seeds, ordered by seed position.

    Returns TrialReports, or full DownstreamResults with ``keep_models``.
    """
    n_trials = cfg.trials if n_trials is None else n_trials
    parallel = cfg.parallel if parallel is None else parallel
    if n_trials < 1:
        raise ValueError("need at least one trial")
    jobs = [(dataset, regime, n_train, checkpoint, cfg, s, window, keep_models) for s in trial_seeds(cfg.seed, n_trials)]
    if parallel <= 1:
        return [_run_one(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=parallel) as ex:
        return list(ex.map(_run_one, jobs))
