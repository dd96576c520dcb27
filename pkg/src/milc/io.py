"""On-disk formats: time-series container, checkpoints, manifests, logs.

All binary formats are little-endian and identified by a magic string.

Time series (``.mts``)::

    b"MILCTS1" | channels u32 | length u32 | channels*length f32 (row-major, channel-major)

Checkpoint (``.mck``)::

    b"MILCCK1" | n_tensors u32
    n_tensors x { name_len u16 | name utf-8 | rank u8 | dims u32 x rank | data f32 }
    config_len u32 | config JSON (utf-8)
"""

from __future__ import annotations

import csv
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .diffcore import Tensor
from .model import ModelBundle
from .synth import CorpusSeries, LabeledDataset
from .windows import WindowSpec

TS_MAGIC = b"MILCTS1"
CK_MAGIC = b"MILCCK1"


class FormatError(ValueError):
    """Malformed or mismatched file."""


class VariantMismatch(FormatError):
    pass


# ------------------------------------------------------------------ atomic


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=1, sort_keys=False) + "\n")


# ------------------------------------------------------------- time series


def encode_timeseries(x: np.ndarray) -> bytes:
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"time series must be (channels, length), got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("time series has non-finite entries")
    c, n = x.shape
    return TS_MAGIC + struct.pack("<II", c, n) + np.ascontiguousarray(x, dtype="<f4").tobytes()


def decode_timeseries(buf: bytes, source: str = "<bytes>") -> np.ndarray:
    head = len(TS_MAGIC) + 8
    if len(buf) < head or buf[: len(TS_MAGIC)] != TS_MAGIC:
        raise FormatError(f"{source}: not a MILCTS1 time-series file")
    c, n = struct.unpack_from("<II", buf, len(TS_MAGIC))
    expected = 4 * c * n
    if len(buf) - head != expected:
        raise FormatError(f"{source}: payload is {len(buf) - head} bytes, header implies {expected} ({c}x{n} f32)")
    return np.frombuffer(buf, dtype="<f4", offset=head).reshape(c, n).astype(np.float32)


def write_timeseries(path, x: np.ndarray) -> None:
    atomic_write_bytes(path, encode_timeseries(x))


def read_timeseries(path) -> np.ndarray:
    return decode_timeseries(Path(path).read_bytes(), str(path))


# --------------------------------------------------------------- checkpoint


def encode_checkpoint(model: ModelBundle, extra: dict | None = None) -> bytes:
    parts = [CK_MAGIC, struct.pack("<I", len(model.params))]
    for name, t in model.params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", t.data.ndim) + struct.pack(f"<{t.data.ndim}I", *t.shape))
        parts.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    cfg = {
        "variant": model.variant,
        "channels": model.channels,
        "win_len": model.window.win_len,
        "overlap": model.window.overlap,
        "meta": {**model.meta, **(extra or {})},
    }
    blob = json.dumps(cfg, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(blob)) + blob)
    return b"".join(parts)


def save_checkpoint(model: ModelBundle, path, extra: dict | None = None) -> None:
    atomic_write_bytes(path, encode_checkpoint(model, extra))


class _Reader:
    def __init__(self, buf: bytes, source: str):
        self.buf, self.pos, self.source = buf, 0, source

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"{self.source}: truncated while reading {what}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(buf: bytes, expected_variant: str | None = None, source: str = "<bytes>") -> ModelBundle:
    r = _Reader(buf, source)
    if r.take(len(CK_MAGIC), "magic") != CK_MAGIC:
        raise FormatError(f"{source}: not a MILCCK1 checkpoint")
    (count,) = r.unpack("<I", "tensor count")
    raw: dict[str, tuple[tuple[int, ...], int]] = {}
    prev = None
    for k in range(count):
        try:
            (nlen,) = r.unpack("<H", f"name length of tensor #{k}")
            try:
                name = r.take(nlen, f"name of tensor #{k}").decode("utf-8")
            except UnicodeDecodeError:
                raise FormatError(f"{source}: tensor #{k} name is not UTF-8") from None
        except FormatError as exc:
            # a bad dims field upstream shifts every later byte; point at it
            if prev is not None:
                raise FormatError(f"{exc} (stream misaligned after tensor {prev[0]!r} with dims {prev[1]})") from None
            raise
        if name in raw:
            raise FormatError(f"{source}: tensor name {name!r} appears twice")
        (rank,) = r.unpack("<B", f"rank of {name!r}")
        dims = r.unpack(f"<{rank}I", f"dims of {name!r}")
        offset = r.pos
        r.take(4 * int(np.prod(dims, dtype=np.int64)), f"data of {name!r}")
        raw[name] = (tuple(dims), offset)
        prev = (name, tuple(dims))
    (clen,) = r.unpack("<I", "config length")
    try:
        cfg = json.loads(r.take(clen, "config").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{source}: config blob is not valid JSON ({exc})") from None
    if r.pos != len(buf):
        raise FormatError(f"{source}: {len(buf) - r.pos} trailing bytes after config")

    variant = cfg.get("variant")
    meta = cfg.get("meta", {})
    template = ModelBundle.create(
        variant if expected_variant is None else expected_variant,
        channels=cfg.get("channels"),
        window=WindowSpec(cfg.get("win_len", 20), cfg.get("overlap", 0.5)),
        with_decoder=any(n.startswith("decoder.") for n in raw),
    )
    mismatch = _first_mismatch(template, raw)
    if expected_variant is not None and variant != expected_variant:
        detail = f"; first mismatched tensor: {mismatch}" if mismatch else ""
        raise VariantMismatch(f"{source}: checkpoint variant {variant!r} != expected {expected_variant!r}{detail}")
    if mismatch:
        raise FormatError(f"{source}: {mismatch}")

    params = {}
    for name, (dims, offset) in raw.items():
        n = int(np.prod(dims, dtype=np.int64))
        arr = np.frombuffer(buf, dtype="<f4", count=n, offset=offset).reshape(dims).astype(np.float32)
        params[name] = Tensor(arr, name=name)
    return ModelBundle(params, template.variant, template.channels, template.window, meta)


def _first_mismatch(template: ModelBundle, raw: dict) -> str | None:
    for name, t in template.params.items():
        if name not in raw:
            return f"tensor {name!r} missing"
        if raw[name][0] != t.shape:
            return f"tensor {name!r} has dims {raw[name][0]}, architecture expects {t.shape}"
    extra = sorted(set(raw) - set(template.params))
    if extra:
        return f"tensor {extra[0]!r} not part of the architecture"
    return None


def load_checkpoint(path, expected_variant: str | None = None) -> ModelBundle:
    return decode_checkpoint(Path(path).read_bytes(), expected_variant, str(path))


# ----------------------------------------------------------------- datasets


def save_downstream(ds: LabeledDataset, out_dir, config: dict | None = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    split_of = {int(i): part for part, idx in ds.split.items() for i in idx}
    files = []
    for k, (x, y) in enumerate(zip(ds.samples, ds.labels)):
        sid = ds.ids[k] if ds.ids else f"sample_{k:05d}"
        fname = f"{sid}.mts"
        write_timeseries(out_dir / fname, x)
        files.append({"path": fname, "id": sid, "label": int(y), "split": split_of.get(k, "train")})
    manifest = {"kind": "downstream", "config": config or {}, "files": files}
    write_json(out_dir / "manifest.json", manifest)
    return out_dir / "manifest.json"


def save_corpus(corpus: list[CorpusSeries], out_dir, config: dict | None = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for s in corpus:
        fname = f"series_{s.series_id:03d}.mts"
        write_timeseries(out_dir / fname, s.data)
        files.append({"path": fname, "series_id": s.series_id, "train": list(s.train), "val": list(s.val), "test": list(s.test)})
    manifest = {"kind": "pretrain", "config": config or {}, "files": files}
    write_json(out_dir / "manifest.json", manifest)
    return out_dir / "manifest.json"


def read_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise FormatError(f"manifest not found: {path}") from None


def load_corpus(data_dir) -> list[CorpusSeries]:
    data_dir = Path(data_dir)
    man = read_manifest(data_dir)
    if man.get("kind") != "pretrain":
        raise FormatError(f"{data_dir}: manifest kind is {man.get('kind')!r}, expected 'pretrain'")
    out = []
    for f in man["files"]:
        p = data_dir / f["path"]
        if not p.exists():
            raise FormatError(f"manifest references missing file {p}")
        out.append(CorpusSeries(read_timeseries(p), np.empty((0, 0)), tuple(f["train"]), tuple(f["val"]), tuple(f["test"]), int(f["series_id"])))
    return out


def ingest_timecourses(data_dir, manifest=None) -> LabeledDataset:
    """Build a labeled dataset from per-subject time-course files.

    ``manifest`` is a path or an already-parsed dict with a ``files`` list of
    ``{"path", "label", "split"}`` entries (paths relative to ``data_dir``).
    """
    data_dir = Path(data_dir)
    if manifest is None:
        manifest = data_dir / "manifest.json"
    man = manifest if isinstance(manifest, dict) else read_manifest(manifest)
    entries = man.get("files")
    if not entries:
        raise FormatError("manifest lists no files")
    missing = [str(data_dir / e["path"]) for e in entries if not (data_dir / e["path"]).exists()]
    if missing:
        raise FormatError(f"manifest references missing files: {', '.join(missing)}")
    samples, labels, ids = [], [], []
    split: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    for k, e in enumerate(entries):
        label = e.get("label")
        if label not in (0, 1):
            raise FormatError(f"{e['path']}: label {label!r} outside {{0, 1}}")
        part = e.get("split")
        if part not in split:
            raise FormatError(f"{e['path']}: split {part!r} is not one of train/val/test")
        x = read_timeseries(data_dir / e["path"])
        if samples and x.shape[0] != samples[0].shape[0]:
            raise FormatError(f"{e['path']}: {x.shape[0]} channels, but {entries[0]['path']} has {samples[0].shape[0]}")
        samples.append(x)
        labels.append(label)
        ids.append(e.get("id", Path(e["path"]).stem))
        split[part].append(k)
    paths = [str(Path(e["path"])) for e in entries]
    dup = sorted({q for q in paths if paths.count(q) > 1})
    if dup:
        raise FormatError(f"files listed more than once (split overlap): {', '.join(dup)}")
    lengths = {s.shape[1] for s in samples}
    if len(lengths) > 1:
        # ragged subjects are cropped to the shortest scan
        n = min(lengths)
        samples = [s[:, :n] for s in samples]
    return LabeledDataset(samples, np.array(labels), split, ids=ids)


# --------------------------------------------------------------------- logs


class EpochLog:
    """Append-only CSV of per-epoch metrics."""

    columns = ("epoch", "train_loss", "val_metric")

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self.rows: list[dict] = []
        if self.path and not self.path.exists():
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", newline="") as fh:
                csv.writer(fh).writerow(self.columns)

    def append(self, epoch: int, train_loss: float, val_metric: float) -> None:
        row = {"epoch": epoch, "train_loss": float(train_loss), "val_metric": float(val_metric)}
        self.rows.append(row)
        if self.path:
            with open(self.path, "a", newline="") as fh:
                csv.writer(fh).writerow([row[c] for c in self.columns])


def read_epoch_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{"epoch": int(r["epoch"]), "train_loss": float(r["train_loss"]), "val_metric": float(r["val_metric"])} for r in csv.DictReader(fh)]
