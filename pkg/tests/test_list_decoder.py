import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polarlist.channel import ChannelConfig, Quantizer, frame_rng, transmit_frame
from polarlist.list_decoder import (
    DecoderPath, DecodeStats, ListState, lazy_copy, lpo_exact, lscd_decode, mld_oracle, pmu_approx,
    pmu_exact, source_word_metric,
)
from polarlist.polar_code import CodeSpec, construct, polar_transform
from polarlist.scd import StageMemory, scd_decode


def noisy_frames(spec, ebno, count, seed=1):
    ch = ChannelConfig(ebno, spec.rate if spec.payload_bits else 0.5)
    for f in range(count):
        rng = frame_rng(seed, f)
        u = spec.source_word(rng.integers(0, 2, spec.payload_bits, dtype=np.uint8))
        yield u, transmit_frame(polar_transform(u), ch, rng)


def sort_oracle(metrics, L):
    """Full sort with the tie rule: metric, then even child first, then lower parent."""
    order = sorted(range(len(metrics)), key=lambda c: (metrics[c], c % 2, c // 2))
    return sorted(order[:L])


def direct_word_metric(llr, u):
    """-log P(u | y) from the codeword posterior, without any SC recursion."""
    x = polar_transform(u)
    return sum(math.log1p(math.exp(-(1 - 2 * int(b)) * l)) for b, l in zip(x, llr))


SPEC8 = CodeSpec(8, 4, 0, (0, 1, 2, 4))


# -- metric updates -------------------------------------------------------------

def test_pmu_approx_examples():
    assert pmu_approx(1.0, -2.5) == (1.0, 3.5)
    assert pmu_approx(1.0, 0.0) == (1.0, 1.0)
    assert pmu_approx(0.0, 3.0) == (0.0, 3.0)


def test_pmu_exact_examples():
    assert pmu_exact(0.0, 0.0, 0) == pytest.approx(math.log(2))
    assert pmu_exact(0.0, 0.0, 1) == pytest.approx(math.log(2))
    assert pmu_exact(0.0, 10.0, 0) == pytest.approx(4.54e-5, rel=1e-3)
    assert pmu_exact(0.0, 10.0, 0) == pytest.approx(math.log1p(math.exp(-10)), rel=1e-12)


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 100), st.floats(-200, 200))
def test_pmu_exact_properties(gamma, lam):
    a, b = pmu_exact(gamma, lam, 0), pmu_exact(gamma, lam, 1)
    assert a >= gamma and b >= gamma
    assert (a - gamma) + (b - gamma) >= abs(lam) - 1e-9
    if abs(lam) > 40:
        approx = pmu_approx(gamma, lam)
        assert min(a, b) == pytest.approx(approx[0], abs=1e-9)
        assert max(a, b) == pytest.approx(approx[1], rel=1e-12)


# -- exact pruning --------------------------------------------------------------

@settings(max_examples=300, deadline=None)
@given(st.integers(0, 5), st.data())
def test_lpo_exact_matches_sort(log_l, data):
    L = 1 << log_l
    m = data.draw(st.lists(st.integers(0, 4), min_size=2 * L, max_size=2 * L))
    m = [float(v) for v in m]
    assert lpo_exact(m, L).tolist() == sort_oracle(m, L)


def test_lpo_exact_all_equal_keeps_even_children():
    assert lpo_exact(np.zeros(16), 8).tolist() == list(range(0, 16, 2))


def test_lpo_exact_single_path_keeps_hard_decision():
    assert lpo_exact([0.3, 2.0], 1).tolist() == [0]


def test_lpo_survivors_dominate_discarded():
    rng = np.random.default_rng(0)
    for _ in range(200):
        m = rng.exponential(size=32)
        keep = lpo_exact(m, 16)
        rest = np.setdiff1d(np.arange(32), keep)
        assert m[keep].max() <= m[rest].min()


# -- decoder behaviour ------------------------------------------------------------

def test_list_of_one_is_sc_decoding():
    spec = construct(256, 128, 16)
    for u, llr in noisy_frames(spec, 1.0, 100):
        assert np.array_equal(lscd_decode(llr, spec, 1).u_hat, scd_decode(llr, spec))


def test_noise_free_decoding():
    spec = construct(256, 128, 16)
    for L in (1, 4, 16):
        for u, _ in noisy_frames(spec, 1.0, 5):
            res = lscd_decode(30.0 * (1.0 - 2.0 * polar_transform(u)), spec, L)
            assert res.crc_ok and np.array_equal(res.u_hat, u)


def test_list_growth_schedule():
    spec = construct(64, 32, 8)
    stats = DecodeStats()
    _, llr = next(noisy_frames(spec, 0.0, 1))
    lscd_decode(llr, spec, 8, stats=stats)
    info = np.cumsum(spec.info_mask)
    assert stats.list_sizes == [min(1 << int(k), 8) for k in info]


def test_best_crc_path_selected():
    spec = construct(128, 64, 8)
    for u, llr in noisy_frames(spec, 0.5, 40, seed=3):
        res = lscd_decode(llr, spec, 8)
        metrics = [m for _, m in res.candidates]
        assert metrics == sorted(metrics)
        passing = [(b, m) for b, m in res.candidates if spec.crc_ok(b)]
        if passing:
            assert res.crc_ok and np.array_equal(res.u_hat, passing[0][0])
        else:
            assert not res.crc_ok and np.array_equal(res.u_hat, res.candidates[0][0])


def test_argument_checks():
    spec = construct(64, 32, 8)
    llr = np.ones(64)
    for bad in (3, 0, 12):
        with pytest.raises(ValueError):
            lscd_decode(llr, spec, bad)
    with pytest.raises(ValueError):
        lscd_decode(llr, spec, 2, pruner="dts")
    with pytest.raises(ValueError):
        lscd_decode(llr, spec, 16, pruner="dts_advance", rt_index=16)
    with pytest.raises(ValueError):
        lscd_decode(llr, spec, 16, pruner="dts_advance", rt_index=7)
    with pytest.raises(ValueError):
        lscd_decode(llr, spec, 4, pruner="sort")
    with pytest.raises(ValueError):
        lscd_decode(np.ones(32), spec, 4)


def test_selective_expansion_empty_set_is_neutral():
    spec = construct(256, 128, 16)
    assert spec.reliable_set == ()
    for _, llr in noisy_frames(spec, 1.0, 30):
        a = lscd_decode(llr, spec, 8)
        b = lscd_decode(llr, spec, 8, se_enabled=True)
        assert np.array_equal(a.u_hat, b.u_hat) and a.metric == b.metric


def test_selective_expansion_on_every_bit_is_sc_decoding():
    base = construct(128, 64, 8)
    spec = base.with_reliable_set(base.info_set)
    for _, llr in noisy_frames(spec, 1.0, 30):
        stats = DecodeStats()
        res = lscd_decode(llr, spec, 8, se_enabled=True, stats=stats)
        assert set(stats.list_sizes) == {1} and stats.lm_bits == []
        assert np.array_equal(res.u_hat, scd_decode(llr, spec))


def test_metrics_never_decrease_along_paths():
    spec = construct(64, 32, 8)
    for _, llr in noisy_frames(spec, 0.0, 10):
        res = lscd_decode(llr, spec, 4, pmu="exact", f="exact")
        for bits, metric in res.candidates:
            prefix = [source_word_metric_prefix(llr, bits, k) for k in range(0, 65, 8)]
            assert all(x <= y + 1e-12 for x, y in zip(prefix, prefix[1:]))
            assert prefix[-1] == pytest.approx(metric, rel=1e-9)


def source_word_metric_prefix(llr, u, k):
    from polarlist.list_decoder import _sc_llr

    g = 0.0
    for i in range(k):
        g = pmu_exact(g, _sc_llr(np.asarray(llr), u[:i]), int(u[i]))
    return g


def test_quantized_mode_metrics_stay_in_register_range():
    spec = construct(256, 128, 16, 1.5)
    q = Quantizer.for_snr(1.5, spec.rate)
    for u, llr in noisy_frames(spec, 1.5, 20):
        res = lscd_decode(q.levels(llr), spec, 8, quantizer=q)
        for _, m in res.candidates:
            assert 0 <= m <= q.metric_levels and m == int(m)


def test_fused_couples_change_no_decision():
    spec = construct(256, 128, 16, 1.5, epsilon=0.3, p_b_lscd=1e-2)
    for _, llr in noisy_frames(spec, 1.5, 20):
        a = lscd_decode(llr, spec, 8, se_enabled=True)
        b = lscd_decode(llr, spec, 8, se_enabled=True, fused=True)
        assert np.array_equal(a.u_hat, b.u_hat)
        assert a.metric == pytest.approx(b.metric, rel=1e-12, abs=1e-12)


# -- lazy copy ---------------------------------------------------------------

def _state(L, N=16):
    rng = np.random.default_rng(L)
    paths = []
    for j in range(L):
        mem = StageMemory(N, rng.normal(size=N))
        paths.append(DecoderPath(np.zeros(N, dtype=np.uint8), float(j), mem))
    return ListState(paths, L)


def test_lazy_copy_identity_map():
    state = _state(4)
    before = [p.stage_refs() for p in state.paths]
    new = lazy_copy(state, [0, 1, 2, 3])
    assert [p.stage_refs() for p in new.paths] == before
    assert all(a is b for a, b in zip(new.paths, state.paths))


def test_lazy_copy_single_parent_shares_everything():
    state = _state(4)
    new = lazy_copy(state, [0, 0, 0, 0])
    assert all(r == 4 for r in new.paths[0].stage_refs())
    assert all(p.mem.bufs[0] is new.paths[0].mem.bufs[0] for p in new.paths)
    # partial sums and bits are private
    assert len({id(p.mem.psum) for p in new.paths}) == 4
    assert len({id(p.bits) for p in new.paths}) == 4


def test_lazy_copy_write_privatises_buffer():
    state = _state(2)
    new = lazy_copy(state, [0, 0])
    buf = new.paths[1].mem.writable(2)
    buf[:] = 99.0
    assert not np.any(new.paths[0].mem.llr(2) == 99.0)
    assert new.paths[0].mem.refcounts()[2] == 1


def test_lazy_and_deep_copy_agree():
    spec = construct(256, 128, 16)
    for _, llr in noisy_frames(spec, 1.0, 40):
        for pruner in ("exact", "dts_advance"):
            a = lscd_decode(llr, spec, 4, pruner=pruner, copy_mode="lazy")
            b = lscd_decode(llr, spec, 4, pruner=pruner, copy_mode="deep")
            assert np.array_equal(a.u_hat, b.u_hat) and a.metric == b.metric


# -- ML oracle ----------------------------------------------------------------

def test_word_metric_two_evaluation_orders():
    rng = np.random.default_rng(2)
    for N in (4, 8, 16):
        for _ in range(30):
            llr = rng.normal(scale=2.0, size=N)
            u = rng.integers(0, 2, N, dtype=np.uint8)
            assert source_word_metric(llr, u) == pytest.approx(direct_word_metric(llr, u), rel=1e-10)


def test_mld_n4_one_frozen_bit():
    spec = CodeSpec(4, 3, 0, (0,))
    rng = np.random.default_rng(4)
    for _ in range(50):
        llr = rng.normal(scale=2.0, size=4)
        words = []
        for v in range(8):
            u = np.array([0, (v >> 2) & 1, (v >> 1) & 1, v & 1], dtype=np.uint8)
            words.append((direct_word_metric(llr, u), u.tolist()))
        assert mld_oracle(llr, spec).tolist() == min(words)[1]


def test_mld_noise_free():
    for u, _ in noisy_frames(SPEC8, 1.0, 16):
        assert np.array_equal(mld_oracle(20.0 * (1.0 - 2.0 * polar_transform(u)), SPEC8), u)


def test_full_list_equals_ml():
    for _, llr in noisy_frames(SPEC8, 0.0, 300, seed=9):
        res = lscd_decode(llr, SPEC8, 16, f="exact", pmu="exact")
        ml = mld_oracle(llr, SPEC8)
        assert np.array_equal(res.u_hat, ml)
        best = source_word_metric(llr, ml)
        assert all(best <= m + 1e-9 for _, m in res.candidates)


def test_mld_refuses_large_codes():
    with pytest.raises(NotImplementedError):
        mld_oracle(np.zeros(64), construct(64, 32, 0))
