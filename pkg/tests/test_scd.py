import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polarlist.channel import ChannelConfig, frame_rng, transmit_frame
from polarlist.polar_code import CodeSpec, construct, polar_transform
from polarlist.scd import (
    StageMemory, compute_leaf, f_approx, f_exact, g_func, hard_decision, node_cycles, scd_decode,
    update_partial_sums,
)

llrs = st.floats(-60, 60, allow_nan=False)


def test_f_approx_values():
    assert f_approx(2.0, -3.0) == -2.0
    assert f_approx(-1.5, 1e9) == -1.5
    assert f_approx(0.0, -7.0) == 0.0


def test_f_exact_values():
    assert f_exact(0.0, 4.0) == 0.0
    assert f_exact(1.0, 1.0) == pytest.approx(2 * math.atanh(math.tanh(0.5) ** 2), abs=1e-14)
    assert f_exact(1.0, 1.0) == pytest.approx(0.4338, abs=1e-4)
    v = f_exact(3.0, 3.0)
    assert 0 < v < 3.0


def test_f_exact_large_inputs_do_not_overflow():
    assert f_exact(800.0, -900.0) == pytest.approx(-800.0)
    assert np.isfinite(f_exact(1e6, 1e6))


@settings(max_examples=300, deadline=None)
@given(llrs, llrs)
def test_f_exact_properties(a, b):
    v = f_exact(a, b)
    assert abs(v) <= min(abs(a), abs(b)) + 1e-12
    if a != 0 and b != 0 and abs(v) > 1e-12:
        assert np.sign(v) == np.sign(a) * np.sign(b)
    assert abs(f_approx(a, b) - v) <= math.log(2) + 1e-12


@settings(max_examples=100, deadline=None)
@given(llrs, llrs)
def test_f_exact_matches_tanh_form(a, b):
    a, b = a / 6, b / 6  # keep tanh away from saturation
    ref = 2 * math.atanh(math.tanh(a / 2) * math.tanh(b / 2))
    assert f_exact(a, b) == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_g_values():
    assert g_func(1.5, 2.0, 0) == 3.5
    assert g_func(1.5, 2.0, 1) == 0.5
    assert g_func(0.0, -2.0, 1) == -2.0


def test_hard_decision():
    assert hard_decision(0.0) == 0
    assert hard_decision(-0.1) == 1
    assert hard_decision(5.0) == 0


def test_partial_sums_small_cases():
    mem = StageMemory(4)
    update_partial_sums(mem, 0, 0)
    update_partial_sums(mem, 0, 1)
    assert not mem.psum.any()
    # [u0, u1] F = [u0 ^ u1, u1]
    for pair, want in (((1, 0), [1, 0]), ((0, 1), [1, 1]), ((1, 1), [0, 1])):
        mem = StageMemory(8)
        update_partial_sums(mem, pair[0], 0)
        update_partial_sums(mem, pair[1], 1)
        assert mem.left_sum(1).tolist() == want


@pytest.mark.parametrize("N", [4, 16, 128])
def test_partial_sums_match_transform_of_block(N):
    """At every g node, the stored sums equal the transform of the preceding block."""
    rng = np.random.default_rng(N)
    for _ in range(10):
        u = rng.integers(0, 2, N, dtype=np.uint8)
        mem = StageMemory(N, rng.normal(size=N))
        for i in range(N):
            if i > 0:
                t = (i & -i).bit_length() - 1
                block = u[i - (1 << t):i]
                assert np.array_equal(mem.left_sum(t), polar_transform(block))
            compute_leaf(mem, i)
            update_partial_sums(mem, int(u[i]), i)


def test_partial_sum_storage_is_half_length():
    assert StageMemory(1024).psum.size == 512
    mem = StageMemory(64)
    assert [mem.llr(t).size for t in range(7)] == [1 << t for t in range(7)]


def test_scd_two_bit_example():
    spec = CodeSpec(2, 1, 0, (0,))
    assert scd_decode([4.0, 4.0], spec).tolist() == [0, 0]


def test_scd_noiseless_random_frames():
    spec = construct(1024, 528, 16)
    rng = np.random.default_rng(5)
    for _ in range(30):
        u = spec.source_word(rng.integers(0, 2, spec.payload_bits, dtype=np.uint8))
        llr = 30.0 * (1.0 - 2.0 * polar_transform(u))
        assert np.array_equal(scd_decode(llr, spec), u)
        assert np.array_equal(scd_decode(llr, spec, f="exact"), u)


def test_scd_matches_direct_recursion():
    """Compare with a textbook recursive SC decoder on noisy frames."""

    def rec(llr, frozen, offset):
        N = len(llr)
        if N == 1:
            u = 0 if offset in frozen else hard_decision(llr[0])
            return np.array([u], dtype=np.uint8)
        h = N // 2
        a, b = llr[:h], llr[h:]
        u1 = rec(np.atleast_1d(f_approx(a, b)), frozen, offset)
        s = polar_transform(u1)
        u2 = rec(np.atleast_1d(g_func(a, b, s)), frozen, offset + h)
        return np.concatenate([u1, u2])

    spec = construct(128, 64, 8)
    ch = ChannelConfig(1.0, spec.rate)
    frozen = set(spec.frozen_set)
    for f in range(50):
        rng = frame_rng(11, f)
        u = spec.source_word(rng.integers(0, 2, spec.payload_bits, dtype=np.uint8))
        llr = transmit_frame(polar_transform(u), ch, rng)
        assert np.array_equal(scd_decode(llr, spec), rec(llr, frozen, 0))


def test_scd_rejects_wrong_length():
    with pytest.raises(ValueError):
        scd_decode(np.zeros(3), construct(4, 2, 0))


def test_trace_counts_nodes():
    spec = construct(64, 32, 0)
    trace = []
    scd_decode(np.ones(64), spec, trace=trace)
    # each stage t runs 2^(n-t) nodes, i.e. 2N - 2 nodes in total
    assert len(trace) == 2 * 64 - 2
    assert node_cycles(5, 8) == 4 and node_cycles(0, 8) == 1
