"""Quick invariant and oracle checks, runnable from the command line."""
from __future__ import annotations

import time

import numpy as np

from . import fast_prune
from .channel import ChannelConfig, transmit_frame
from .latency_model import baseline_latency, classify_couples, lscd_latency, schedule_latency
from .list_decoder import lpo_exact, lscd_decode, mld_oracle, source_word_metric
from .polar_code import CodeSpec, construct, crc_append, crc_check, get_crc, polar_transform
from .scd import scd_decode

# couple counts of a published N=1024 construction and the cycle counts they give
LATENCY_ROWS = (
    ((158, 0, 66, 224, 48, 16), 1462),
    ((168, 0, 64, 224, 48, 8), 1424),
    ((176, 5, 60, 224, 43, 4), 1381),
    ((186, 11, 54, 224, 37, 0), 1329),
)


def _check_transform(rng, n):
    for _ in range(n):
        u = rng.integers(0, 2, 1 << int(rng.integers(1, 11)), dtype=np.uint8)
        if not np.array_equal(polar_transform(polar_transform(u)), u):
            return False
    return True


def _check_crc(rng, n):
    data = np.unpackbits(np.frombuffer(b"123456789", dtype=np.uint8))
    if get_crc(16).remainder(data) != 0x29B1:
        return False
    for _ in range(n):
        msg = crc_append(rng.integers(0, 2, 40, dtype=np.uint8))
        flip = msg.copy()
        flip[rng.integers(len(msg))] ^= 1
        if not crc_check(msg) or crc_check(flip):
            return False
    return True


def _check_noiseless_scd(rng, n):
    spec = construct(256, 128, 16)
    for _ in range(n):
        u = spec.source_word(rng.integers(0, 2, spec.payload_bits, dtype=np.uint8))
        llr = 20.0 * (1.0 - 2.0 * polar_transform(u))
        if not np.array_equal(scd_decode(llr, spec), u):
            return False
    return True


def _check_lpo(rng, n):
    for _ in range(n):
        L = 1 << int(rng.integers(0, 5))
        m = rng.integers(0, 6, 2 * L).astype(float)
        ref = sorted(range(2 * L), key=lambda c: (m[c], c % 2, c // 2))[:L]
        if not np.array_equal(lpo_exact(m, L), np.sort(ref)):
            return False
    return True


def _check_prop1(rng, n):
    for _ in range(n):
        L = 1 << int(rng.integers(2, 6))
        parents = np.sort(rng.exponential(size=L))
        lam = np.abs(rng.normal(scale=3.0, size=L))
        children = np.concatenate([parents, parents + lam])
        if not all(fast_prune.proposition1_check(parents, children, l) for l in range(L)):
            return False
    return True


def _check_fused(rng, n):
    from .scd import f_approx, g_func, hard_decision

    for _ in range(n):
        g, a, b = rng.exponential(), rng.normal(scale=4), rng.normal(scale=4)
        lam0 = f_approx(a, b)
        m = g + (abs(lam0) if lam0 < 0 else 0.0)
        lam1 = g_func(b, a, 0)
        m4 = m + (abs(lam1) if lam1 < 0 else 0.0)
        if abs(fast_prune.fused_pmu_frozen_frozen(g, a, b) - m4) > 1e-12 * max(1.0, m4):
            return False
        m2, pair = fast_prune.fused_pmu_frozen_info(g, a, b)
        if m2 != m or pair != (0, hard_decision(lam1)):
            return False
    return True


def _check_mld(rng, n):
    spec = CodeSpec(8, 4, 0, (0, 1, 2, 4))
    ch = ChannelConfig(1.0, 0.5)
    for _ in range(n):
        u = spec.source_word(rng.integers(0, 2, 4, dtype=np.uint8))
        llr = transmit_frame(polar_transform(u), ch, rng)
        res = lscd_decode(llr, spec, 16, f="exact", pmu="exact")
        ml = mld_oracle(llr, spec)
        if not np.isclose(res.metric, source_word_metric(llr, ml), rtol=1e-9, atol=1e-12):
            return False
    return True


def _check_latency(rng, n):
    D = baseline_latency(1024, 64)
    if D != 3104 or any(lscd_latency(D, c, 1024) != want for c, want in LATENCY_ROWS):
        return False
    spec = construct(256, 128, 16, 1.5, epsilon=0.3, p_b_lscd=1e-2)
    counts = classify_couples(spec)
    if sum(counts.values()) != 128:
        return False
    return schedule_latency(spec, 8) == lscd_latency(baseline_latency(256, 8), counts)


CHECKS = (
    ("polar transform is an involution", _check_transform, 200),
    ("CRC check value and single-bit detection", _check_crc, 200),
    ("noiseless SC decoding", _check_noiseless_scd, 50),
    ("exact list pruning vs full sort", _check_lpo, 2000),
    ("child-count bounds of sorted parents", _check_prop1, 2000),
    ("fused couple updates vs two-step path", _check_fused, 5000),
    ("list decoder vs exhaustive ML", _check_mld, 30),
    ("latency formula and schedule count", _check_latency, 1),
)


def run_selftest(quick: bool = True, seed: int = 2024, out=print) -> bool:
    rng = np.random.default_rng(seed)
    scale = 1 if quick else 10
    ok = True
    for name, fn, n in CHECKS:
        t0 = time.perf_counter()
        passed = fn(rng, n * scale)
        ok &= passed
        out(f"{'PASS' if passed else 'FAIL'}  {name}  ({time.perf_counter() - t0:.2f} s)")
    return ok
