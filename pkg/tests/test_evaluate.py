"""Scoring contract: confusion tallies, the exact-ratio metrics (OA, AA,
kappa) against a brute-force per-pixel oracle, and PPM map rendering.
"""

import json

import numpy as np
import pytest

from hsigancrf import evaluate
from hsigancrf.errors import ContractError, ShapeError


# ---------------------------------------------------------------------------
# confusion
# ---------------------------------------------------------------------------


def test_confusion_perfect_is_diagonal():
    truth = np.array([[1, 2], [3, 0]])
    cm = evaluate.confusion(truth, truth, n_y=3)
    assert np.array_equal(cm.counts, np.diag([1, 1, 1]))
    assert cm.total == 3


def test_confusion_all_background_is_empty():
    truth = np.zeros((3, 3), dtype=np.int32)
    pred = np.ones((3, 3), dtype=np.int32)
    cm = evaluate.confusion(truth, pred, n_y=2)
    assert cm.total == 0
    assert cm.counts.shape == (2, 2)


def test_confusion_hand_fixture():
    truth = np.array([[1, 1, 2], [2, 0, 1]])
    pred = np.array([[1, 2, 2], [2, 1, 1]])
    cm = evaluate.confusion(truth, pred, n_y=2)
    # truth 1 pixels: pred 1, 2, 1 -> row [2, 1]; truth 2: pred 2, 2 -> [0, 2]
    assert cm.counts.tolist() == [[2, 1], [0, 2]]


def test_confusion_dim_mismatch():
    with pytest.raises(ShapeError):
        evaluate.confusion(np.zeros((2, 2)), np.zeros((2, 3)))


def test_confusion_rejects_missing_prediction():
    truth = np.array([[1, 2]])
    pred = np.array([[1, 0]])
    with pytest.raises(ContractError, match=r"\(0, 1\)"):
        evaluate.confusion(truth, pred, n_y=2)


def test_confusion_background_prediction_ok_on_background_truth():
    truth = np.array([[0, 1]])
    pred = np.array([[0, 1]])
    cm = evaluate.confusion(truth, pred, n_y=2)
    assert cm.total == 1


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def test_metrics_perfect_agreement():
    cm = evaluate.ConfusionMatrix(counts=np.diag([4, 2, 9]))
    rep = evaluate.metrics(cm)
    assert rep.oa == 1.0 and rep.aa == 1.0 and rep.kappa == 1.0
    assert rep.per_class.tolist() == [1.0, 1.0, 1.0]
    assert rep.evaluated_count == 15


def test_metrics_frozen_kappa_two_thirds():
    cm = evaluate.ConfusionMatrix(counts=[[2, 1], [0, 3]])
    rep = evaluate.metrics(cm)
    assert rep.oa == 5 / 6
    # integer form keeps the simple ratio exact
    assert rep.kappa == 2 / 3
    assert rep.per_class.tolist() == [2 / 3, 1.0]
    assert rep.aa == (2 / 3 + 1.0) / 2


def test_metrics_independent_prediction_low_kappa():
    rng = np.random.default_rng(0)
    truth = rng.integers(1, 4, size=(80, 80))
    pred = rng.integers(1, 4, size=(80, 80))
    rep = evaluate.metrics(evaluate.confusion(truth, pred, n_y=3))
    assert abs(rep.kappa) < 0.05


def test_metrics_empty_rejected():
    cm = evaluate.ConfusionMatrix(counts=np.zeros((2, 2), dtype=np.int64))
    with pytest.raises(ContractError, match="no annotated"):
        evaluate.metrics(cm)


def test_metrics_absent_class_excluded_from_aa():
    cm = evaluate.ConfusionMatrix(counts=[[3, 1, 0], [1, 3, 0], [0, 0, 0]])
    rep = evaluate.metrics(cm)
    assert rep.aa == 0.75  # mean of 3/4 and 3/4, class 3 absent
    assert rep.per_class[2] == 0.0


def test_metrics_degenerate_single_cell():
    perfect = evaluate.metrics(evaluate.ConfusionMatrix(counts=[[5, 0], [0, 0]]))
    assert perfect.kappa == 1.0
    wrong = evaluate.metrics(evaluate.ConfusionMatrix(counts=[[0, 5], [0, 0]]))
    assert wrong.kappa == 0.0 and wrong.oa == 0.0


def brute_force_metrics(truth, pred, n_y):
    """Independent per-pixel tally with float arithmetic."""
    pairs = [(int(t), int(p)) for t, p in zip(truth.ravel(), pred.ravel()) if t > 0]
    n = len(pairs)
    oa = sum(1 for t, p in pairs if t == p) / n
    per = []
    for c in range(1, n_y + 1):
        row = [(t, p) for t, p in pairs if t == c]
        if row:
            per.append(sum(1 for t, p in row if p == c) / len(row))
    aa = sum(per) / len(per)
    p_e = sum(
        (sum(1 for t, _ in pairs if t == c) / n) *
        (sum(1 for _, p in pairs if p == c) / n)
        for c in range(1, n_y + 1))
    kappa = (oa - p_e) / (1 - p_e)
    return oa, aa, kappa


def test_metrics_match_brute_force_tally():
    rng = np.random.default_rng(1)
    for trial in range(5):
        truth = rng.integers(0, 5, size=(20, 20))
        pred = rng.integers(1, 5, size=(20, 20))
        rep = evaluate.metrics(evaluate.confusion(truth, pred, n_y=4))
        oa, aa, kappa = brute_force_metrics(truth, pred, 4)
        assert abs(rep.oa - oa) < 1e-12
        assert abs(rep.aa - aa) < 1e-12
        assert abs(rep.kappa - kappa) < 1e-12


def test_metrics_permutation_invariance():
    rng = np.random.default_rng(2)
    counts = rng.integers(0, 30, size=(4, 4))
    perm = np.array([2, 0, 3, 1])
    a = evaluate.metrics(evaluate.ConfusionMatrix(counts=counts))
    b = evaluate.metrics(evaluate.ConfusionMatrix(counts=counts[perm][:, perm]))
    assert a.oa == b.oa
    assert abs(a.aa - b.aa) < 1e-15
    assert a.kappa == b.kappa


def test_metrics_ranges():
    rng = np.random.default_rng(3)
    for _ in range(10):
        counts = rng.integers(0, 9, size=(3, 3))
        if counts.sum() == 0:
            continue
        rep = evaluate.metrics(evaluate.ConfusionMatrix(counts=counts))
        assert 0.0 <= rep.oa <= 1.0
        assert 0.0 <= rep.aa <= 1.0
        assert -1.0 <= rep.kappa <= 1.0
        assert ((rep.per_class >= 0) & (rep.per_class <= 1)).all()


def test_metrics_json_shape():
    rep = evaluate.metrics(evaluate.ConfusionMatrix(counts=[[2, 1], [0, 3]]))
    blob = json.loads(evaluate.metrics_json(rep))
    assert set(blob) == {"oa", "aa", "kappa", "per_class", "evaluated"}
    assert blob["evaluated"] == 6
    assert blob["per_class"] == [2 / 3, 1.0]
    # stable output: serializing twice gives identical text
    assert evaluate.metrics_json(rep) == evaluate.metrics_json(rep)


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def test_render_header_and_payload():
    img = evaluate.render_map(np.array([[1]]))
    assert img.startswith(b"P6\n1 1\n255\n")
    assert img[len(b"P6\n1 1\n255\n"):] == bytes(evaluate.PALETTE[1])


def test_render_background_black():
    img = evaluate.render_map(np.array([[0]]))
    assert img.endswith(b"\x00\x00\x00")


def test_render_deterministic():
    rng = np.random.default_rng(4)
    labels = rng.integers(0, 17, size=(9, 5))
    assert evaluate.render_map(labels) == evaluate.render_map(labels)
    assert evaluate.render_map(labels).startswith(b"P6\n5 9\n255\n")


def test_render_rejects_label_beyond_palette():
    with pytest.raises(ContractError, match="palette"):
        evaluate.render_map(np.array([[17]]))


def test_render_rejects_flat_input():
    with pytest.raises(ShapeError):
        evaluate.render_map(np.zeros(4, dtype=np.int32))


def test_palette_has_17_distinct_entries():
    assert evaluate.PALETTE.shape == (17, 3)
    assert len(np.unique(evaluate.PALETTE, axis=0)) == 17
