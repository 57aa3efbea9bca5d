import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vaevc.errors import ConfigError, EvaluationError, ShapeError
from vaevc.evaluation import (
    CSV_COLUMNS,
    McdReport,
    UtteranceScore,
    compare_systems,
    format_table,
    mcd_frame,
    mcd_frames,
    mcd_utterance,
    read_reports_csv,
    reports_csv,
)
from vaevc.features import stft


def test_mcd_hand_value():
    # one coefficient off by 1: (10 / ln 10) * sqrt(2)
    assert mcd_frame([1.0, 0.0], [0.0, 0.0]) == pytest.approx(10 / math.log(10) * math.sqrt(2), rel=1e-14)
    assert mcd_frame(np.ones(24), np.ones(24)) == 0.0


def test_mcd_shape_mismatch():
    with pytest.raises(ShapeError):
        mcd_frames(np.zeros((2, 24)), np.zeros((2, 23)))


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, 24, elements=st.floats(-5, 5)),
    arrays(np.float64, 24, elements=st.floats(-5, 5)),
)
def test_mcd_symmetric_nonnegative(a, b):
    assert mcd_frame(a, b) == mcd_frame(b, a) >= 0.0


@settings(max_examples=50, deadline=None)
@given(*[arrays(np.float64, 24, elements=st.floats(-5, 5)) for _ in range(3)])
def test_mcd_triangle_inequality(a, b, c):
    assert mcd_frame(a, c) <= mcd_frame(a, b) + mcd_frame(b, c) + 1e-9


def voiced_spectra(seed=0, seconds=0.4):
    rng = np.random.default_rng(seed)
    t = np.arange(int(16000 * seconds)) / 16000
    x = sum(np.sin(2 * np.pi * f * t) / k for k, f in enumerate(rng.uniform(100, 3000, 6), 1))
    return np.abs(stft(x + 1e-3 * rng.standard_normal(t.size)))


def test_identical_utterance_scores_zero():
    sp = voiced_spectra()
    mcd, n = mcd_utterance(sp, sp)
    assert mcd == 0.0 and n == sp.shape[0]
    mcd, _ = mcd_utterance(sp * 7.0, sp)  # gain does not matter, c0 is excluded
    assert mcd < 1e-9


def test_silent_frames_are_excluded():
    sp = voiced_spectra()
    quiet = sp.copy()
    quiet[:5] *= 1e-4  # 80 dB down
    _, n = mcd_utterance(quiet, quiet, align=False)
    assert n == sp.shape[0] - 5


def test_time_stretch_scores_near_zero_with_alignment():
    sp = voiced_spectra(1)
    stretched = np.repeat(sp, 2, axis=0)
    aligned, _ = mcd_utterance(stretched, sp)
    assert aligned < 1e-9
    direct, _ = mcd_utterance(voiced_spectra(2), sp)
    assert direct > 1.0


def test_empty_utterance():
    with pytest.raises(EvaluationError):
        mcd_utterance(np.zeros((0, 513)), voiced_spectra())


def make_report(system, pair, scores):
    return McdReport(system, pair, [UtteranceScore(f"u{i}", n, m) for i, (n, m) in enumerate(scores)])


def test_report_mean_is_frame_weighted():
    r = make_report("A", "p", [(100, 2.0), (300, 4.0)])
    assert r.mean == pytest.approx(3.5)
    assert r.frames == 400
    with pytest.raises(EvaluationError):
        McdReport("B", "p").mean


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 500), st.floats(0, 20)), min_size=1, max_size=12), st.randoms())
def test_report_mean_order_invariant(scores, rnd):
    a = make_report("A", "p", scores)
    shuffled = list(scores)
    rnd.shuffle(shuffled)
    assert make_report("A", "p", shuffled).mean == a.mean


def test_compare_systems_ranking_and_csv():
    worse = make_report("source", "s->t", [(10, 5.0)])
    better = make_report("VAE", "s->t", [(10, 2.0), (5, 3.0)])
    ranked, csv_text, table = compare_systems([worse, better])
    assert [r.system for r in ranked] == ["VAE", "source"]
    lines = csv_text.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + 3
    back = read_reports_csv(csv_text)
    assert [(r.system, r.mean) for r in back] == [(r.system, pytest.approx(r.mean)) for r in ranked]
    assert reports_csv(back) == csv_text
    assert "VAE" in table.splitlines()[2]
    assert table == format_table(ranked)
    with pytest.raises(ConfigError):
        compare_systems([])


def test_ties_broken_by_label():
    a = make_report("b", "p", [(1, 1.0)])
    b = make_report("a", "p", [(1, 1.0)])
    assert [r.system for r in compare_systems([a, b])[0]] == ["a", "b"]
