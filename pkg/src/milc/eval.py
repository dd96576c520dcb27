"""ROC AUC and learning-curve aggregation over trial reports."""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 * P(tie)."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores but {labels.size} labels")
    if not np.all(np.isin(labels, (0, 1))):
        raise ValueError("labels must be binary (0/1)")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes present")
    # midranks give ties half credit
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class TrialReport:
    seed: int
    regime: str
    n_train: int
    epochs_run: int
    val_auc: float
    test_auc: float
    wall_time: float = 0.0
    curve: list[dict] = field(default_factory=list)

    def __post_init__(self) -> None:
        for name in ("val_auc", "test_auc"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrialReport":
        return cls(**d)


@dataclass
class CurvePoint:
    regime: str
    n_train: int
    median: float
    min: float
    max: float
    n_trials: int


def build_learning_curve(reports) -> list[CurvePoint]:
    """Median / min / max test AUC per (regime, n_train), sorted by regime then size."""
    cells: dict[tuple[str, int], list[float]] = {}
    for r in reports:
        cells.setdefault((r.regime, int(r.n_train)), []).append(float(r.test_auc))
    points = []
    for (regime, n), aucs in sorted(cells.items()):
        if not aucs:
            warnings.warn(f"no trials for {regime} at n_train={n}; omitted", stacklevel=2)
            continue
        a = np.asarray(aucs)
        points.append(CurvePoint(regime, n, float(np.median(a)), float(a.min()), float(a.max()), len(a)))
    return points


CURVE_COLUMNS = ["regime", "n_train", "median", "min", "max", "n_trials"]


def curve_to_csv(points: list[CurvePoint]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CURVE_COLUMNS, lineterminator="\n")
    w.writeheader()
    for p in points:
        w.writerow(asdict(p))
    return buf.getvalue()


def curve_from_csv(text: str) -> list[CurvePoint]:
    rows = csv.DictReader(io.StringIO(text))
    return [
        CurvePoint(r["regime"], int(r["n_train"]), float(r["median"]), float(r["min"]), float(r["max"]), int(r["n_trials"]))
        for r in rows
    ]


def curve_to_series(points: list[CurvePoint], external: dict[str, list[dict]] | None = None) -> dict:
    """Plot-ready JSON: per regime, median AUC against n_train with a min/max band.

    ``external`` adds precomputed series (e.g. a baseline run elsewhere) verbatim
    under their own names; each entry is a list of {"n_train", "median", "min", "max"}.
    """
    series: dict[str, dict] = {}
    for p in points:
        s = series.setdefault(p.regime, {"x": [], "y": [], "lo": [], "hi": []})
        s["x"].append(p.n_train)
        s["y"].append(p.median)
        s["lo"].append(p.min)
        s["hi"].append(p.max)
    for name, rows in (external or {}).items():
        rows = sorted(rows, key=lambda r: r["n_train"])
        series[name] = {
            "x": [r["n_train"] for r in rows],
            "y": [r["median"] for r in rows],
            "lo": [r.get("min", r["median"]) for r in rows],
            "hi": [r.get("max", r["median"]) for r in rows],
        }
    return {"metric": "test_auc", "series": series}


def curve_table(points: list[CurvePoint]) -> dict[str, dict[int, float]]:
    """{regime: {n_train: median}} convenience view."""
    out: dict[str, dict[int, float]] = {}
    for p in points:
        out.setdefault(p.regime, {})[p.n_train] = p.median
    return out


def dump_reports(reports, path) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, json.dumps([r.to_dict() for r in reports], indent=1))


def load_reports(path) -> list[TrialReport]:
    with open(path) as fh:
        return [TrialReport.from_dict(d) for d in json.load(fh)]
