"""Reference list successive-cancellation decoder and a brute-force ML oracle.

This is the readable, instrumented implementation: one :class:`DecoderPath`
per list entry, each owning a :class:`~polarlist.scd.StageMemory`.  Survivors
share stage LLR buffers (lazy copy) unless ``copy_mode="deep"``.  The fast
Monte Carlo path lives in :mod:`polarlist._kernel` and is checked against
this module frame by frame.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import fast_prune
from .channel import Quantizer
from .polar_code import FROZEN, RELIABLE, CodeSpec, is_power_of_two, polar_transform
from .scd import (F_KERNELS, StageMemory, compute_leaf, ctz, g_func, hard_decision,
                  update_partial_sums)

PRUNERS = ("exact", "dts", "dts_advance")


def _softplus(x: float) -> float:
    return max(x, 0.0) + float(np.log1p(np.exp(-abs(x))))


def pmu_approx(gamma: float, lam: float) -> tuple[float, float]:
    """Metrics of the (hard-decision, opposite) children."""
    return gamma, gamma + abs(lam)


def pmu_exact(gamma: float, lam: float, u_hat: int) -> float:
    """gamma + log(1 + exp((2u - 1) lam))."""
    return gamma + _softplus((2 * u_hat - 1) * lam)


def lpo_exact(metrics, L: int) -> np.ndarray:
    """Indices of the L smallest of 2M interleaved child metrics.

    Child ``2l`` is the hard-decision extension of parent ``l`` and ``2l+1``
    the opposite one.  Ties prefer even children, then lower parents.  The
    result is sorted by candidate index.
    """
    m = np.asarray(metrics, dtype=float)
    M = len(m) // 2
    arranged = np.concatenate([m[0::2], m[1::2]])
    order = np.argsort(arranged, kind="stable")[:L]
    cand = np.where(order < M, 2 * order, 2 * (order - M) + 1)
    return np.sort(cand)


@dataclass
class DecoderPath:
    bits: np.ndarray
    metric: float
    mem: StageMemory

    def stage_refs(self) -> list[int]:
        return self.mem.refcounts()


@dataclass
class ListState:
    paths: list[DecoderPath]
    list_size: int

    @property
    def actual_size(self) -> int:
        return len(self.paths)

    def metrics(self) -> np.ndarray:
        return np.array([p.metric for p in self.paths])


def lazy_copy(state: ListState, parents, mode: str = "lazy") -> ListState:
    """Rebuild the list so slot ``j`` continues path ``parents[j]``.

    The first slot taking a parent reuses its object; further slots get a
    clone whose stage LLR buffers are shared (``"lazy"``) or copied
    (``"deep"``).  Bit histories and partial sums are always copied.  Paths
    with no survivor release their buffers.
    """
    used = set()
    out = []
    for p in parents:
        src = state.paths[p]
        if p not in used:
            used.add(p)
            out.append(src)
            continue
        mem = src.mem.share() if mode == "lazy" else src.mem.deep_copy()
        out.append(DecoderPath(src.bits.copy(), src.metric, mem))
    for j, path in enumerate(state.paths):
        if j not in used:
            path.mem.release()
    return ListState(out, state.list_size)


@dataclass
class DecodeStats:
    """Counters filled in by an instrumented decode."""

    prune_events: int = 0
    prop1_checks: int = 0
    prop1_violations: int = 0
    short_lists: int = 0
    list_sizes: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    lm_bits: list = field(default_factory=list)


@dataclass
class ListDecodeResult:
    u_hat: np.ndarray
    crc_ok: bool
    metric: float
    candidates: list


class _QuantOps:
    """Integer-domain arithmetic of the fixed-point mode."""

    def __init__(self, q: Quantizer):
        self.lmax = float(q.llr_levels)
        self.mmax = float(q.metric_levels)

    def g(self, a, b, s):
        return np.clip(g_func(a, b, s), -self.lmax, self.lmax)

    def normalise(self, paths):
        lo = min(p.metric for p in paths)
        for p in paths:
            p.metric = min(p.metric - lo, self.mmax)


def _leaf(mem, i, fk, qops, stop=0, trace=None):
    if qops is None:
        compute_leaf(mem, i, fk, stop=stop, trace=trace)
        return
    # same walk, with saturating g
    n = mem.n
    if i == 0:
        top = n - 1
    else:
        top = ctz(i)
        h = 1 << top
        src = mem.llr(top + 1)
        mem.writable(top)[:] = qops.g(src[:h], src[h:], mem.left_sum(top))
        if trace is not None:
            trace.append(("g", top))
        top -= 1
    for t in range(top, stop - 1, -1):
        h = 1 << t
        src = mem.llr(t + 1)
        mem.writable(t)[:] = fk(src[:h], src[h:])
        if trace is not None:
            trace.append(("f", t))


def _check_list_args(L: int, pruner: str, rt_index):
    if not (isinstance(L, (int, np.integer)) and is_power_of_two(int(L))):
        raise ValueError(f"list size must be a power of two, got {L}")
    if pruner not in PRUNERS:
        raise ValueError(f"unknown pruner {pruner!r}")
    if pruner != "exact":
        fast_prune.check_rt_index(L, L - 1 if rt_index is None else rt_index)


def lscd_decode(llr_in, spec: CodeSpec, L: int, pruner: str = "exact", se_enabled: bool = False, *,
                rt_index: int | None = None, f: str = "approx", pmu: str = "approx",
                rng: np.random.Generator | None = None, copy_mode: str = "lazy",
                quantizer: Quantizer | None = None, fused: bool = False,
                stats: DecodeStats | None = None) -> ListDecodeResult:
    """List SC decoding with optional selective expansion and threshold pruning.

    ``llr_in`` are channel LLRs (already quantised to register levels when a
    quantizer is given, see :meth:`Quantizer.levels`).  Returns the best
    CRC-passing candidate, or the best candidate flagged ``crc_ok=False``.
    """
    _check_list_args(L, pruner, rt_index)
    if rt_index is None:
        rt_index = L - 1
    if fused and (f != "approx" or pmu != "approx" or quantizer is not None):
        raise ValueError("fused couple updates assume the approximate kernels in floating point")
    llr_in = np.asarray(llr_in, dtype=float)
    if llr_in.shape != (spec.N,):
        raise ValueError(f"expected {spec.N} LLRs, got shape {llr_in.shape}")
    if pruner == "dts" and rng is None:
        rng = np.random.default_rng(0)
    N = spec.N
    fk = F_KERNELS[f]
    qops = _QuantOps(quantizer) if quantizer is not None else None
    types = spec.bit_types.copy()
    if not se_enabled:
        types[types == RELIABLE] = 1
    trace = stats.trace if stats is not None else None

    state = ListState([DecoderPath(np.zeros(N, dtype=np.uint8), 0.0, StageMemory(N, llr_in))], L)

    def frozen_update(path, lam):
        if pmu == "approx":
            path.metric += abs(lam) if lam < 0 else 0.0
        else:
            path.metric = pmu_exact(path.metric, lam, 0)

    i = 0
    while i < N:
        couple = (types[i], types[i + 1]) if (fused and i % 2 == 0) else None
        if couple in ((RELIABLE, RELIABLE), (FROZEN, RELIABLE), (FROZEN, FROZEN)):
            for path in state.paths:
                _leaf(path.mem, i, fk, None, stop=1, trace=trace)
                L0, L1 = path.mem.llr(1)
                if couple == (FROZEN, FROZEN):
                    path.metric = fast_prune.fused_pmu_frozen_frozen(path.metric, L0, L1)
                    pair = (0, 0)
                elif couple == (FROZEN, RELIABLE):
                    path.metric, pair = fast_prune.fused_pmu_frozen_info(path.metric, L0, L1)
                else:
                    pair = fast_prune.fused_reliable_pair(L0, L1)
                path.bits[i], path.bits[i + 1] = pair
                update_partial_sums(path.mem, pair[0], i)
                update_partial_sums(path.mem, pair[1], i + 1)
            if stats is not None:
                stats.list_sizes += [state.actual_size] * 2
            i += 2
            continue

        lams = []
        for path in state.paths:
            _leaf(path.mem, i, fk, qops, trace=trace)
            lams.append(float(path.mem.llr(0)[0]))

        kind = types[i]
        if kind == FROZEN:
            for path, lam in zip(state.paths, lams):
                frozen_update(path, lam)
                update_partial_sums(path.mem, 0, i)
        elif kind == RELIABLE:
            for path, lam in zip(state.paths, lams):
                u = fast_prune.se_extend(path, i, lam, pmu)
                update_partial_sums(path.mem, u, i)
        else:
            if stats is not None:
                stats.lm_bits.append(i)
            state = _expand(state, lams, i, L, pruner, rt_index, pmu, rng, copy_mode, stats)
        if qops is not None:
            qops.normalise(state.paths)
        if stats is not None:
            stats.list_sizes.append(state.actual_size)
        i += 1

    return _select(state, spec)


def _expand(state, lams, i, L, pruner, rt_index, pmu, rng, copy_mode, stats):
    size = state.actual_size
    parents_m = state.metrics()
    hd = np.array([hard_decision(x) for x in lams], dtype=np.uint8)
    if pmu == "approx":
        pme = parents_m.copy()
        pmo = parents_m + np.abs(lams)
    else:
        pme = np.array([pmu_exact(g, x, int(u)) for g, x, u in zip(parents_m, lams, hd)])
        pmo = np.array([pmu_exact(g, x, 1 - int(u)) for g, x, u in zip(parents_m, lams, hd)])
    children = np.empty(2 * size)
    children[0::2], children[1::2] = pme, pmo

    if 2 * size <= L:
        cand = np.arange(2 * size)
    else:
        if stats is not None:
            stats.prune_events += 1
            if pmu == "approx" and size == L:
                srt = np.sort(parents_m)
                for l in range(L):
                    stats.prop1_checks += 1
                    if not fast_prune.proposition1_check(srt, children, l):
                        stats.prop1_violations += 1
        if pruner == "exact":
            cand = lpo_exact(children, L)
        elif pruner == "dts":
            padded = np.concatenate([parents_m, np.full(L - size, np.inf)])
            _, th = fast_prune.tta(padded, rt_index)
            ke, ko = fast_prune.dts_prune(pme, pmo, th, rng, list_size=L)
            keep = np.empty(2 * size, dtype=bool)
            keep[0::2], keep[1::2] = ke, ko
            cand = np.flatnonzero(keep)
            if len(cand) < L and stats is not None:
                stats.short_lists += 1
        else:
            sp, th = fast_prune.tta(parents_m, rt_index)
            perm = sp.permutation
            ke_p, ko_p = fast_prune.dts_advance_prune(pme[perm], pmo[perm], th)
            keep = np.zeros(2 * size, dtype=bool)
            keep[2 * perm] = ke_p
            keep[2 * perm + 1] = ko_p
            cand = np.flatnonzero(keep)

    parents = cand // 2
    new = lazy_copy(state, parents, copy_mode)
    for path, c in zip(new.paths, cand):
        l = c // 2
        u = int(hd[l]) if c % 2 == 0 else 1 - int(hd[l])
        path.bits[i] = u
        path.metric = float(children[c])
        update_partial_sums(path.mem, u, i)
    return new


def _select(state: ListState, spec: CodeSpec) -> ListDecodeResult:
    order = sorted(range(state.actual_size), key=lambda j: (state.paths[j].metric, j))
    cands = [(state.paths[j].bits.copy(), state.paths[j].metric) for j in order]
    for bits, metric in cands:
        if spec.crc_ok(bits):
            return ListDecodeResult(bits, True, metric, cands)
    bits, metric = cands[0]
    return ListDecodeResult(bits, False, metric, cands)


# --------------------------------------------------------------------------
# Maximum-likelihood oracle
# --------------------------------------------------------------------------

def _sc_llr(llr, u_prefix) -> float:
    """Synthetic-channel LLR of bit ``len(u_prefix)`` by recursion on halves.

    With x = ((u1 ^ u2) G, u2 G), G the half-size transform, the first half of
    the source word sees f(first, second) and the second half sees
    g(first, second, u1 G).
    """
    N = len(llr)
    if N == 1:
        return float(llr[0])
    h = N // 2
    a, b = llr[:h], llr[h:]
    if len(u_prefix) < h:
        return _sc_llr(np.atleast_1d(F_KERNELS["exact"](a, b)), u_prefix)
    s = polar_transform(u_prefix[:h])
    return _sc_llr(np.atleast_1d(g_func(a, b, s)), u_prefix[h:])


def source_word_metric(llr, u) -> float:
    """gamma^N(u) accumulated bit by bit with exact metric updates."""
    u = np.asarray(u, dtype=np.uint8)
    gamma = 0.0
    for i in range(len(u)):
        gamma = pmu_exact(gamma, _sc_llr(np.asarray(llr, dtype=float), u[:i]), int(u[i]))
    return gamma


def _sc_llr_batch(llr, words, k: int) -> np.ndarray:
    """``_sc_llr`` of bit ``k`` for every row of ``words`` at once; ``llr`` has one row per word."""
    N = llr.shape[1]
    if N == 1:
        return llr[:, 0]
    h = N // 2
    a, b = llr[:, :h], llr[:, h:]
    if k < h:
        return _sc_llr_batch(F_KERNELS["exact"](a, b), words, k)
    s = polar_transform(words[:, :h])
    return _sc_llr_batch(g_func(a, b, s), words[:, h:], k - h)


def mld_oracle(llr_in, spec: CodeSpec, max_k: int = 16) -> np.ndarray:
    """Exhaustive ML decoding over all 2^K source words; ties go to the smallest word.

    Every candidate's metric is accumulated bit by bit with exact updates, all
    candidates in one batch.
    """
    if spec.K > max_k:
        raise NotImplementedError(f"enumeration of 2^{spec.K} words is not supported")
    llr = np.asarray(llr_in, dtype=float)
    # rows in lexicographic order of the source word
    words = np.zeros((1 << spec.K, spec.N), dtype=np.uint8)
    words[:, list(spec.info_set)] = np.array(list(itertools.product((0, 1), repeat=spec.K)),
                                             dtype=np.uint8).reshape(1 << spec.K, spec.K)
    rows = np.broadcast_to(llr, words.shape)
    gamma = np.zeros(len(words))
    for i in range(spec.N):
        lam = _sc_llr_batch(rows, words, i)
        x = (2.0 * words[:, i] - 1.0) * lam
        gamma += np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return words[int(np.argmin(gamma))].copy()
