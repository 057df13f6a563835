"""Confusion-count construction and arithmetic."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phaseeval.confusion import (
    ConfusionMatrix,
    LengthMismatch,
    confusion_of,
    sum_confusions,
)
from phaseeval.core import LabelSequence, PhaseSet

PHASES5 = PhaseSet(5)


def _seq(labels):
    return LabelSequence(tuple(labels))


def test_counts_match_hand_example():
    y = _seq([0, 0, 1, 1, 2])
    yhat = _seq([0, 1, 1, 1, 1])
    m = confusion_of(y, yhat, PhaseSet(3))
    expected = np.array([[1, 1, 0], [0, 2, 0], [0, 1, 0]])
    assert np.array_equal(m.counts, expected)
    assert m.total == 5
    assert m.tp(1) == 2
    assert m.fp(1) == 2
    assert m.fn(1) == 0
    assert m.annotated_phases() == (0, 1, 2)


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        confusion_of(_seq([0, 1]), _seq([0, 1, 2]), PHASES5)


def test_counts_are_read_only():
    m = confusion_of(_seq([0, 1]), _seq([1, 1]), PhaseSet(2))
    with pytest.raises(ValueError):
        m.counts[0, 0] = 99


labels5 = st.lists(st.integers(0, 4), min_size=1, max_size=60)


@given(st.tuples(labels5, labels5))
def test_counts_by_brute_force(pair):
    a, b = pair
    n = min(len(a), len(b))
    y, yhat = a[:n], b[:n]
    m = confusion_of(_seq(y), _seq(yhat), PHASES5)
    for p in range(5):
        for q in range(5):
            want = sum(1 for t in range(n) if y[t] == p and yhat[t] == q)
            assert m.counts[p, q] == want
    assert m.total == n
    assert sum(m.row_sum(p) for p in range(5)) == n


@given(st.lists(st.tuples(labels5, labels5), min_size=1, max_size=4))
def test_sum_matches_concatenation(pairs):
    pairs = [(a[: min(len(a), len(b))], b[: min(len(a), len(b))]) for a, b in pairs]
    mats = [confusion_of(_seq(y), _seq(p), PHASES5) for y, p in pairs]
    cat_y = [x for y, _ in pairs for x in y]
    cat_p = [x for _, p in pairs for x in p]
    assert sum_confusions(mats) == confusion_of(_seq(cat_y), _seq(cat_p), PHASES5)


def test_sum_rejects_mixed_sizes():
    a = ConfusionMatrix(np.zeros((3, 3), dtype=np.int64), 3)
    b = ConfusionMatrix(np.zeros((4, 4), dtype=np.int64), 4)
    with pytest.raises(Exception):
        sum_confusions([a, b])
