import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shotbound import evaluate
from shotbound.classify import BoundaryEvent
from shotbound.errors import UnsortedInput, ZeroElapsed
from shotbound.evaluate import Counts, EvalReport

cut = BoundaryEvent.cut
grad = BoundaryEvent.gradual


def _counts(report):
    o = report.overall
    return o.true_positives, o.false_positives, o.false_negatives


# matching

def test_cut_within_tolerance():
    assert _counts(evaluate.evaluate([cut(100)], [cut(101)], tol=2)) == (1, 0, 0)


def test_cut_outside_tolerance():
    assert _counts(evaluate.evaluate([cut(100)], [cut(105)], tol=2)) == (0, 1, 1)


def test_cut_inside_gradual_is_kind_mismatch():
    m = evaluate.match_events([grad(40, 50)], [cut(45)])
    assert m.pairs == [(0, 0)] and m.kind_mismatches == 1
    report = evaluate.score(m)
    assert _counts(report) == (1, 0, 0)
    assert report.kind_mismatches == 1
    # per-kind tallies do not credit the mismatch
    assert report.cut.false_positives == 1 and report.gradual.false_negatives == 1


@pytest.mark.parametrize("frame,hit", [(37, False), (38, True), (52, True), (53, False)])
def test_gradual_widened_by_tol(frame, hit):
    assert len(evaluate.match_events([grad(40, 50)], [cut(frame)], 2).pairs) == int(hit)


def test_one_to_one():
    m = evaluate.match_events([cut(100)], [cut(99), cut(101)])
    assert len(m.pairs) == 1
    assert _counts(evaluate.score(m)) == (1, 1, 0)


def test_prediction_takes_nearest():
    m = evaluate.match_events([cut(9), cut(12)], [cut(11)])
    assert m.pairs == [(1, 0)]
    m = evaluate.match_events([cut(10), cut(12)], [cut(11)])
    assert m.pairs == [(0, 0)]  # equal distance: earliest


def test_tol_zero_exact_only():
    assert _counts(evaluate.evaluate([cut(7)], [cut(7)], tol=0)) == (1, 0, 0)
    assert _counts(evaluate.evaluate([cut(7)], [cut(8)], tol=0)) == (0, 1, 1)


def test_unsorted_input():
    with pytest.raises(UnsortedInput):
        evaluate.match_events([cut(5), cut(3)], [])
    with pytest.raises(UnsortedInput):
        evaluate.match_events([], [cut(5), cut(3)])
    with pytest.raises(ValueError):
        evaluate.match_events([], [], tol=-1)


# scoring

def test_score_conventions():
    one = Counts(1, 0, 0)
    assert (one.precision, one.recall, one.f1) == (1.0, 1.0, 1.0)
    empty = Counts(0, 0, 0)
    assert (empty.precision, empty.recall, empty.f1) == (1.0, 1.0, 1.0)
    c = Counts(90, 10, 10)
    assert (c.precision, c.recall, c.f1) == pytest.approx((0.9, 0.9, 0.9), abs=1e-15)
    # P+R = 0 cannot happen with TP=0 and a 0/0 side, but both sides nonzero gives 0
    assert Counts(0, 3, 4).f1 == 0.0


def test_empty_empty_report():
    report = evaluate.evaluate([], [])
    assert (report.precision, report.recall, report.f1) == (1.0, 1.0, 1.0)


def test_reports_add():
    a = evaluate.evaluate([cut(10)], [cut(10)])
    b = evaluate.evaluate([cut(10)], [cut(30)])
    total = a + b
    assert _counts(total) == (1, 1, 1)


# throughput

def test_throughput_examples():
    assert evaluate.throughput(310, 10) == 31
    assert evaluate.throughput(0, 0) == 0
    assert evaluate.throughput(1000, 4) == 250
    with pytest.raises(ZeroElapsed):
        evaluate.throughput(5, 0)


def test_report_fps():
    assert EvalReport(frames=310, elapsed=10.0).fps == 31.0
    assert EvalReport(frames=10).fps is None


# output formats

def test_json_and_table():
    report = evaluate.evaluate([cut(10), grad(40, 45)], [cut(11)])
    report.frames, report.elapsed, report.method = 100, 2.0, "mine"
    d = json.loads(report.to_json())
    assert d["overall"]["true_positives"] == 1 and d["overall"]["false_negatives"] == 1
    assert d["fps"] == 50.0 and d["method"] == "mine"
    table = evaluate.format_table([report, EvalReport(method="none")]).splitlines()
    assert table[0].split("  ")[0].strip() == "Method"
    assert "Speed (FPS)" in table[0] and "F score" in table[0]
    assert table[2].split()[:3] == ["mine", "50", "0.6667"]
    assert table[3].split()[1] == "-"


# properties

_event = st.one_of(
    st.builds(cut, st.integers(0, 200)),
    st.builds(lambda s, d: grad(s, s + d), st.integers(0, 200), st.integers(1, 15)),
)


@settings(max_examples=200, deadline=None)
@given(st.lists(_event, max_size=15), st.lists(_event, max_size=15), st.integers(0, 4), st.randoms())
def test_matching_invariants(gt, pred, tol, rnd):
    report = evaluate.evaluate(gt, pred, tol)
    tp, fp, fn = _counts(report)
    assert tp + fp == len(pred) and tp + fn == len(gt)
    assert tp <= min(len(gt), len(pred))
    assert min(tp, fp, fn) >= 0
    shuffled_gt, shuffled_pred = list(gt), list(pred)
    rnd.shuffle(shuffled_gt)
    rnd.shuffle(shuffled_pred)
    assert _counts(evaluate.evaluate(shuffled_gt, shuffled_pred, tol)) == (tp, fp, fn)
    assert 0.0 <= report.f1 <= 1.0


@settings(max_examples=100, deadline=None)
@given(st.lists(_event, max_size=20))
def test_self_evaluation_perfect(events):
    report = evaluate.evaluate(events, events)
    assert report.f1 == 1.0 and report.kind_mismatches == 0
