import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from milc.eval import (
    TrialReport,
    build_learning_curve,
    curve_from_csv,
    curve_table,
    curve_to_csv,
    curve_to_series,
    dump_reports,
    load_reports,
    roc_auc,
)


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


def test_worked_example():
    assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_perfect_and_tied():
    assert roc_auc([0, 1, 2, 3], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.3] * 6, [0, 1] * 3) == 0.5


def test_two_hundred_random_sets_with_ties():
    r = np.random.default_rng(0)
    done = 0
    while done < 200:
        n = int(r.integers(2, 15))
        labels = r.integers(0, 2, n)
        if labels.min() == labels.max():
            continue
        scores = r.integers(0, 4, n) / 2.0 if done % 2 else r.standard_normal(n)
        assert abs(roc_auc(scores, labels) - pairwise_auc(scores, labels)) < 1e-12
        done += 1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(0, 1)), min_size=2, max_size=30))
def test_antisymmetry_and_monotone_invariance(pairs):
    scores = np.array([p[0] for p in pairs], dtype=float)
    labels = np.array([p[1] for p in pairs])
    if labels.min() == labels.max():
        return
    a = roc_auc(scores, labels)
    assert a + roc_auc(-scores, labels) == pytest.approx(1.0, abs=1e-12)
    assert roc_auc(np.exp(scores) * 3 + 1, labels) == pytest.approx(a, abs=1e-12)
    assert 0.0 <= a <= 1.0


@pytest.mark.parametrize("labels", [[1, 1, 1], [0, 0]])
def test_single_class_rejected(labels):
    with pytest.raises(ValueError, match="both classes"):
        roc_auc(np.zeros(len(labels)), labels)


def test_non_binary_rejected():
    with pytest.raises(ValueError, match="binary"):
        roc_auc([0.1, 0.2, 0.3], [0, 1, 2])


def report(regime, n, auc, seed=0):
    return TrialReport(seed=seed, regime=regime, n_train=n, epochs_run=1, val_auc=auc, test_auc=auc)


def test_report_rejects_out_of_range():
    with pytest.raises(ValueError):
        report("npt", 16, 1.2)


def test_single_trial_cell():
    (p,) = build_learning_curve([report("fpt", 32, 0.7)])
    assert p.median == p.min == p.max == 0.7


def test_constant_trials():
    (p,) = build_learning_curve([report("ufpt", 16, 0.9, s) for s in range(10)])
    assert (p.median, p.min, p.max, p.n_trials) == (0.9, 0.9, 0.9, 10)


def sorted_median(xs):
    xs = sorted(xs)
    k = len(xs)
    return xs[k // 2] if k % 2 else (xs[k // 2 - 1] + xs[k // 2]) / 2


def test_median_matches_sort_oracle():
    r = np.random.default_rng(1)
    reps, expect = [], {}
    for regime in ("npt", "fpt"):
        for n in (16, 64):
            aucs = list(r.uniform(0.4, 1.0, int(r.integers(1, 12))))
            reps += [report(regime, n, a, s) for s, a in enumerate(aucs)]
            expect[(regime, n)] = (sorted_median(aucs), min(aucs), max(aucs))
    for p in build_learning_curve(reps):
        m, lo, hi = expect[(p.regime, p.n_train)]
        assert p.median == pytest.approx(m, abs=1e-15)
        assert (p.min, p.max) == (lo, hi)
        assert lo <= p.median <= hi


def test_curve_outputs_round_trip(tmp_path):
    reps = [report("npt", 16, 0.6), report("npt", 16, 0.7), report("fpt", 16, 0.8)]
    pts = build_learning_curve(reps)
    assert curve_from_csv(curve_to_csv(pts)) == pts
    table = curve_table(pts)
    assert table["fpt"] == {16: 0.8} and table["npt"][16] == pytest.approx(0.65)
    series = curve_to_series(pts, external={"baseline": [{"n_train": 16, "median": 0.55}]})
    npt = series["series"]["npt"]
    assert (npt["x"], npt["lo"], npt["hi"]) == ([16], [0.6], [0.7])
    assert npt["y"] == pytest.approx([0.65])
    assert series["series"]["baseline"]["lo"] == [0.55]
    json.dumps(series)
    dump_reports(reps, tmp_path / "r.json")
    assert load_reports(tmp_path / "r.json") == reps
