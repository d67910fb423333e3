from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from clinact.core import EmptyEvaluationError, Segment as S
from clinact.metrics import (
    RecognitionReport,
    cohens_kappa,
    label_set_jaccard,
    miou,
    mof,
    read_reports,
    segment_matches,
    segmental_f1,
    write_reports,
)
from clinact.sequence import run_length_encode

# (pred, gt, include_background, expected) -- expected values hand-counted
MOF_CASES = [
    ([1, 2, 3], [1, 2, 3], False, F(1)),
    ([1, 2, 2, 9], [1, 1, 2, 0], False, F(2, 3)),
    ([0, 0, 0, 0], [1, 1, 1, 1], False, F(0)),
    ([5, 5, 5, 0], [0, 0, 5, 5], False, F(1, 2)),
    ([1, 2, 0, 0], [1, 2, 3, 4], False, F(1, 2)),
    ([0, 1, 1, 1], [0, 0, 1, 1], True, F(3, 4)),
    ([0, 0, 1], [0, 0, 0], True, F(2, 3)),
    ([3, 0, 3, 4, 4, 4], [3, 3, 3, 0, 0, 4], False, F(3, 4)),
    ([1] * 3 + [2] * 7, [1] * 5 + [2] * 5, False, F(8, 10)),
    ([8, 8, 7], [7, 7, 8], False, F(0)),
    ([1, 1, 1], [1, 0, 0], False, F(1)),
]

MIOU_CASES = [
    ([1, 2, 3], [1, 2, 3], False, F(1)),
    ([1, 2, 2, 2], [1, 1, 2, 2], False, F(7, 12)),
    ([5, 5], [1, 2], False, F(0)),
    ([1, 1, 0, 0], [1, 1, 1, 0], False, F(2, 3)),
    ([1, 1, 1, 1], [1, 1, 0, 0], False, F(1, 2)),
    ([1, 2, 2, 3, 3, 1], [1, 1, 2, 2, 3, 3], False, F(1, 3)),
    ([0, 1, 1, 1], [0, 0, 1, 1], True, F(7, 12)),
    ([4, 4, 4, 9], [4, 4, 4, 4], False, F(3, 4)),
    ([2, 2, 2, 2], [1, 1, 1, 2], False, F(1, 8)),
    ([0, 0, 6, 6], [6, 6, 0, 0], False, F(0)),
    ([3, 3, 3, 3], [3, 3, 0, 0], True, F(1, 4)),
]

F1_CASES = [
    ([S(1, 0, 10), S(2, 10, 5)], [S(1, 0, 10), S(2, 10, 5)], 0.5, F(1)),
    ([S(1, 5, 10)], [S(1, 0, 10)], 0.5, F(0)),
    ([S(1, 5, 10)], [S(1, 0, 10)], 0.25, F(1)),
    ([], [], 0.5, F(1)),
    ([S(1, 0, 3)], [], 0.5, F(0)),
    ([S(1, 0, 10)], [S(1, 0, 10), S(2, 10, 10)], 0.5, F(2, 3)),
    ([S(2, 0, 10)], [S(1, 0, 10)], 0.1, F(0)),
    ([S(1, 0, 5), S(1, 5, 5)], [S(1, 0, 10)], 0.5, F(2, 3)),
    ([S(1, 0, 10), S(1, 20, 10), S(3, 40, 5)], [S(1, 0, 10), S(1, 20, 10)], 0.5, F(4, 5)),
    ([S(1, 1, 4)], [S(1, 0, 4)], 0.5, F(1)),
    ([S(1, 2, 4)], [S(1, 0, 4)], 0.5, F(0)),
    ([S(1, 2, 4)], [S(1, 0, 4)], 0.1, F(1)),
    ([S(1, 5, 10)], [S(1, 0, 10), S(1, 10, 10)], 0.25, F(2, 3)),
]

# (t1, t2, fps, hz, expected)
KAPPA_CASES = [
    ([1, 2, 3, 1], [1, 2, 3, 1], 1, 1, F(1)),
    ([1, 1, 2, 2], [1, 2, 1, 2], 1, 1, F(0)),
    ([3, 3, 3], [3, 3, 3], 1, 1, F(1)),
    ([1, 1, 1, 2], [1, 1, 2, 2], 1, 1, F(1, 2)),
    ([0, 0, 1, 1], [0, 1, 1, 0], 1, 1, F(-1, 2)),
    ([1, 2, 3], [2, 3, 1], 1, 1, F(-1, 2)),
    ([1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2], [1, 5, 5, 5, 1, 5, 5, 5, 1, 5, 5, 5, 2], 4, 1, F(1, 2)),
    ([1] * 25 + [2] * 25, [1] * 50, 25, 1, F(0)),
    ([1, 1, 1, 1, 2, 2], [1, 1, 1, 2, 2, 2], 1, 1, F(2, 3)),
    ([0, 0, 0, 4, 4], [0, 0, 0, 4, 4], 1, 1, F(1)),
    ([1, 1, 2, 2, 0, 0], [2, 2, 1, 1, 0, 0], 1, 1, F(-1)),
]


@pytest.mark.parametrize("pred, gt, bg, expected", MOF_CASES)
def test_mof_fixtures(pred, gt, bg, expected):
    assert abs(mof(pred, gt, bg) - float(expected)) <= 1e-12


@pytest.mark.parametrize("pred, gt, bg, expected", MIOU_CASES)
def test_miou_fixtures(pred, gt, bg, expected):
    assert abs(miou(pred, gt, bg) - float(expected)) <= 1e-12


@pytest.mark.parametrize("pred, gt, thr, expected", F1_CASES)
def test_segmental_f1_fixtures(pred, gt, thr, expected):
    assert abs(segmental_f1(pred, gt, thr) - float(expected)) <= 1e-12


@pytest.mark.parametrize("t1, t2, fps, hz, expected", KAPPA_CASES)
def test_kappa_fixtures(t1, t2, fps, hz, expected):
    assert abs(cohens_kappa(t1, t2, hz=hz, fps=fps) - float(expected)) <= 1e-12
    assert abs(cohens_kappa(t2, t1, hz=hz, fps=fps) - float(expected)) <= 1e-12


def test_greedy_match_prefers_earlier_gt_on_ties():
    assert segment_matches([S(1, 5, 10)], [S(1, 0, 10), S(1, 10, 10)], 0.25) == [(0, 0, pytest.approx(1 / 3))]


def test_empty_evaluations_raise():
    with pytest.raises(EmptyEvaluationError):
        mof([1, 1], [0, 0])
    with pytest.raises(EmptyEvaluationError):
        miou([1, 1], [0, 0])
    with pytest.raises(EmptyEvaluationError):
        cohens_kappa([0, 0], [0, 0], 1, 1)


def test_length_mismatch():
    with pytest.raises(ValueError):
        mof([1], [1, 1])


def test_mof_and_miou_are_asymmetric():
    pred, gt = [1, 1, 1, 1], [1, 1, 0, 0]
    assert mof(pred, gt) == 1.0
    assert mof(gt, pred) == 0.5
    assert miou(pred, gt) == 0.5
    assert miou(gt, pred) == 0.5
    pred, gt = [1, 1, 2, 2], [1, 1, 1, 2]
    assert miou(pred, gt) == pytest.approx((2 / 3 + 1 / 2) / 2)
    assert miou(gt, pred) == pytest.approx((2 / 3 + 1 / 2) / 2)
    assert mof([1, 2, 2], [1, 1, 0]) != mof([1, 1, 0], [1, 2, 2])


@pytest.mark.parametrize(
    "a, b, expected",
    [([1, 2, 0], [2, 1, 1], 1.0), ([1, 2], [2, 3], 1 / 3), ([1, 1], [0, 0], 0.0), ([0], [0], 1.0)],
)
def test_label_set_jaccard(a, b, expected):
    assert label_set_jaccard(a, b) == pytest.approx(expected, abs=1e-12)


timelines = st.lists(st.integers(0, 5), min_size=1, max_size=40)


@given(timelines)
def test_perfect_prediction_chain(gt):
    if not any(gt):
        return
    assert mof(gt, gt) == 1.0
    assert miou(gt, gt) == 1.0
    segs = run_length_encode(gt, 1)
    for thr in (0.1, 0.5, 0.9, 1.0):
        assert segmental_f1(segs, segs, thr) == 1.0


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=40), st.permutations(range(1, 17)))
def test_metrics_invariant_to_label_permutation(pairs, perm):
    gt = np.array([p[0] for p in pairs])
    pred = np.array([p[1] for p in pairs])
    relabel = np.array([0] + list(perm))
    g2, p2 = relabel[gt], relabel[pred]
    if gt.any():
        assert mof(pred, gt) == mof(p2, g2)
        assert miou(pred, gt) == pytest.approx(miou(p2, g2), abs=1e-15)
    if gt.any() or pred.any():
        assert cohens_kappa(pred, gt, 1, 1) == pytest.approx(cohens_kappa(p2, g2, 1, 1), abs=1e-12)
    sp, sg = run_length_encode(pred, 1), run_length_encode(gt, 1)
    sp2, sg2 = run_length_encode(p2, 1), run_length_encode(g2, 1)
    assert segmental_f1(sp, sg) == segmental_f1(sp2, sg2)


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=40))
def test_kappa_symmetric_and_bounded(pairs):
    a = [p[0] for p in pairs]
    b = [p[1] for p in pairs]
    if not (any(a) or any(b)):
        return
    k = cohens_kappa(a, b, 1, 1)
    assert k == pytest.approx(cohens_kappa(b, a, 1, 1), abs=1e-12)
    assert -1 - 1e-12 <= k <= 1 + 1e-12


def test_report_csv_round_trip(tmp_path):
    reps = [RecognitionReport("s1", 0.5, 0.25, 1.0, 10, 3), RecognitionReport("s2", 1 / 3, 0.0, 0.0, 4, 1)]
    p = tmp_path / "r.csv"
    write_reports(p, reps)
    assert p.read_text().splitlines()[0] == "session_id,mof,miou,f1,evaluated_frames,gt_classes"
    assert read_reports(p) == reps
