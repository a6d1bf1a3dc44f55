import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polarlist.latency_model import (
    CASES, CoupleWarning, LatencyReport, baseline_latency, classify_couples, couple_classes,
    latency_report, lscd_latency, schedule_latency,
)
from polarlist.polar_code import CodeSpec, build_reliability, construct, select_reliable_set

TABLE_ROWS = {
    0.3: ((158, 0, 66, 224, 48, 16), 1462),
    1: ((168, 0, 64, 224, 48, 8), 1424),
    3: ((176, 5, 60, 224, 43, 4), 1381),
    9: ((186, 11, 54, 224, 37, 0), 1329),
}


def test_baseline_latency_values():
    assert baseline_latency(1024, 64) == 3104
    assert baseline_latency(256, 64) == 3 * 256
    with pytest.raises(ValueError):
        baseline_latency(1024, 512)
    with pytest.raises(ValueError):
        baseline_latency(1000, 64)
    with pytest.raises(ValueError):
        baseline_latency(1024, 48)


@pytest.mark.parametrize("eps", sorted(TABLE_ROWS))
def test_published_rows(eps):
    counts, want = TABLE_ROWS[eps]
    assert sum(counts) == 512
    assert lscd_latency(3104, counts, 1024) == want
    assert lscd_latency(3104, dict(zip(CASES, counts))) == want


def test_no_reduction_without_savings():
    assert lscd_latency(3104, {"VI": 512}, 1024) == 3104


def test_counts_must_cover_all_couples():
    with pytest.raises(ValueError):
        lscd_latency(3104, (158, 0, 66, 224, 48, 15), 1024)
    with pytest.raises(ValueError):
        lscd_latency(3104, {"VII": 1})
    with pytest.raises(ValueError):
        lscd_latency(3104, (1, 2, 3))


def test_classification_extremes():
    all_frozen = CodeSpec(16, 0, 0, tuple(range(16)))
    assert classify_couples(all_frozen) == {"I": 0, "II": 0, "III": 0, "IV": 8, "V": 0, "VI": 0}
    all_info = CodeSpec(16, 16, 0, ())
    assert classify_couples(all_info)["VI"] == 8
    all_reliable = all_info.with_reliable_set(range(16))
    assert classify_couples(all_reliable)["I"] == 8


def test_classification_table():
    # couples: (F,R) (U,R) (F,U) (R,R) (F,F) (U,U) (F,F) (F,F)
    spec = CodeSpec(16, 8, 0, (0, 4, 8, 9, 12, 13, 14, 15), reliable_set=(1, 3, 6, 7))
    cls = couple_classes(spec)
    assert [c.case for c in cls] == ["II", "III", "V", "I", "IV", "VI", "IV", "IV"]
    assert all(c.consistent for c in cls)
    assert cls[0].frozen_count == 1 and cls[3].reliable_count == 2


def test_impossible_couples_warn_and_count_as_vi():
    spec = CodeSpec(4, 2, 0, (1, 3))  # (U,F) twice
    with pytest.warns(CoupleWarning):
        cls = couple_classes(spec)
    assert [c.case for c in cls] == ["VI", "VI"] and not cls[0].consistent
    spec = CodeSpec(4, 4, 0, (), reliable_set=(0, 2))  # (R,U) twice
    with pytest.warns(CoupleWarning):
        assert classify_couples(spec)["VI"] == 2


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([64, 256, 1024]), st.floats(0.1, 0.9), st.floats(0.01, 20.0))
def test_counts_sum_to_half_length(N, rate, eps):
    K = max(17, int(rate * N))
    spec = construct(N, K, 16, 1.5, epsilon=eps, p_b_lscd=1e-3)
    with warnings.catch_warnings():
        warnings.simplefilter("error", CoupleWarning)
        counts = classify_couples(spec)
    assert sum(counts.values()) == N // 2
    rep = latency_report(spec, 8)
    assert rep.D_lscd <= rep.D


def test_latency_monotone_in_reliable_set():
    spec = construct(1024, 528, 16, 1.5)
    prof = build_reliability(1024, 2.25, spec.rate)
    last = None
    for eps in (0.01, 0.1, 0.3, 1, 3, 9, 100):
        rel = spec.with_reliable_set(select_reliable_set(spec, prof, eps, 1e-4))
        d = latency_report(rel, 64).D_lscd
        assert last is None or d <= last
        last = d


@pytest.mark.parametrize("N,M", [(64, 4), (256, 16), (1024, 64), (1024, 8)])
def test_schedule_oracle(N, M):
    base = construct(N, N // 2 + 16, 16, 1.5)
    assert schedule_latency(base, M, reduced=False) == baseline_latency(N, M)
    for eps in (0.3, 3.0):
        spec = construct(N, N // 2 + 16, 16, 1.5, epsilon=eps, p_b_lscd=1e-3)
        counts = classify_couples(spec)
        assert schedule_latency(spec, M) == lscd_latency(baseline_latency(N, M), counts)


def test_report_json():
    spec = construct(1024, 528, 16)
    counts = dict(zip(CASES, TABLE_ROWS[0.3][0]))
    rep = latency_report(spec, 64, counts)
    assert isinstance(rep, LatencyReport)
    doc = json.loads(rep.dumps())
    assert doc == {"n": 1024, "m": 64, "d_baseline": 3104, "counts": counts, "d_lscd": 1462}


def test_construction_latency_is_recorded():
    spec = construct(1024, 528, 16, 1.5, epsilon=0.3, p_b_lscd=2.5e-4, se_snr_db=2.25)
    rep = latency_report(spec, 64)
    assert sum(rep.counts.values()) == 512
    assert rep.D_lscd == lscd_latency(3104, rep.counts)
    assert np.isclose(len(spec.reliable_set) / spec.K, 405 / 528)
