"""Low-latency list management.

Double thresholding (DTS) replaces the exact 2L -> L sort by comparisons
against an acceptance threshold AT and a rejection threshold RT taken from the
sorted parent metrics.  DTS-Advance is the hardware-shaped variant: a
threshold-tracking partial sort of the parents, a permutation of the child
metrics, and a deterministic replacement step that always fills the list.
Selective expansion and the fused two-bit metric updates live here too.
"""
from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass

import numpy as np

from .polar_code import is_power_of_two
from .scd import hard_decision


@dataclass(frozen=True)
class Thresholds:
    at: float
    rt: float
    rt_index: int


@dataclass(frozen=True)
class SortedParents:
    """Parent metrics after the TTA.

    ``partially_sorted[:L/2]`` are the L/2 smallest in no particular order,
    ``partially_sorted[L/2:]`` are the rest in ascending order, and
    ``permutation[k]`` is the original index of position ``k``.
    """

    partially_sorted: np.ndarray
    permutation: np.ndarray


def check_rt_index(L: int, rt_index: int) -> int:
    if not (is_power_of_two(L) and L >= 4):
        raise ValueError(f"threshold pruning needs a power-of-two list size >= 4, got {L}")
    if not L // 2 <= rt_index <= L - 1:
        raise ValueError(f"rt_index must lie in [{L // 2}, {L - 1}] for L={L}, got {rt_index}")
    return rt_index


def tta(parent_metrics, rt_index: int | None = None) -> tuple[SortedParents, Thresholds]:
    """Functional model of the threshold-tracking architecture.

    Two sorters of L/2 inputs, an array of compare-and-swap cells pairing
    d0[j] with d1[L/2-1-j] (ties keep d0 on top), and a final sort of the
    lower half.  AT is the smallest lower-half metric and RT the metric at
    ``rt_index`` of the full ascending order (default L-1).
    """
    pm = np.asarray(parent_metrics, dtype=float)
    L = len(pm)
    rt_index = check_rt_index(L, L - 1 if rt_index is None else rt_index)
    h = L // 2
    g0 = np.argsort(pm[:h], kind="stable")
    g1 = h + np.argsort(pm[h:], kind="stable")
    upper = np.empty(h, dtype=np.int64)
    lower = np.empty(h, dtype=np.int64)
    for j in range(h):
        a, b = g0[j], g1[h - 1 - j]
        if pm[a] <= pm[b]:
            upper[j], lower[j] = a, b
        else:
            upper[j], lower[j] = b, a
    lower = lower[np.argsort(pm[lower], kind="stable")]
    perm = np.concatenate([upper, lower])
    vals = pm[perm]
    return SortedParents(vals, perm), Thresholds(float(vals[h]), float(vals[rt_index]), rt_index)


def dts_prune(pme, pmo, th: Thresholds, rng: np.random.Generator, list_size: int | None = None):
    """Plain double thresholding over children in parent order.

    DTS.1 keeps every metric below AT, DTS.2 drops every metric above RT and
    DTS.3 fills the list with a random subset of the band [AT, RT].  One
    uniform key is drawn per band member (candidate order: even then odd child
    of parent 0, then parent 1, ...) and the smallest keys win.  When the band
    is too small the list comes back short.

    Returns boolean masks ``(keep_even, keep_odd)``.
    """
    pme = np.asarray(pme, dtype=float)
    pmo = np.asarray(pmo, dtype=float)
    L = len(pme) if list_size is None else list_size
    m = np.empty(2 * len(pme))
    m[0::2], m[1::2] = pme, pmo
    accept = m < th.at
    band = np.flatnonzero((m >= th.at) & (m <= th.rt))
    need = L - int(accept.sum())
    keep = accept.copy()
    if len(band) <= need:
        keep[band] = True
    elif need > 0:
        keys = rng.random(len(band))
        keep[band[np.argsort(keys, kind="stable")[:need]]] = True
    return keep[0::2], keep[1::2]


def dts_advance_prune(pme, pmo, th: Thresholds):
    """DTS-Advance pruning-and-copying over TTA-permuted children.

    The first L/2 even children are kept; of the sorted last L/2, the largest
    min(k, L/2) are replaced by the first qualifying odd children, k being the
    number of odd children not above RT.  Always keeps exactly L.

    Returns boolean masks ``(keep_even, keep_odd)`` in permuted order.
    """
    pme = np.asarray(pme, dtype=float)
    pmo = np.asarray(pmo, dtype=float)
    L = len(pme)
    h = L // 2
    keep_even = np.ones(L, dtype=bool)
    keep_odd = np.zeros(L, dtype=bool)
    qualifying = np.flatnonzero(pmo <= th.rt)
    k = min(len(qualifying), h)
    if k:
        keep_even[L - k:] = False
        keep_odd[qualifying[:k]] = True
    return keep_even, keep_odd


def omega_count(children, threshold: float) -> int:
    return int(np.count_nonzero(np.asarray(children) < threshold))


def proposition1_check(parents, children, l: int) -> bool:
    """Check l <= |{children < parents[l]}| <= 2l for sorted parents.

    With tied parents, ``l`` is taken as the first position holding the value
    ``parents[l]`` (the two coincide for distinct metrics).
    """
    parents = np.asarray(parents, dtype=float)
    t = parents[l]
    l_eff = bisect_left(parents.tolist(), t)
    c = omega_count(children, t)
    return l_eff <= c <= 2 * l_eff


def se_extend(path, i: int, lam: float, pmu: str = "approx") -> int:
    """Single extension of ``path`` at a reliable bit: take the hard decision.

    Under the approximate metric update the metric is unchanged; under the
    exact one it grows by log(1 + exp(-|lam|)).
    """
    u = hard_decision(lam)
    path.bits[i] = u
    if pmu == "exact":
        path.metric += float(np.log1p(np.exp(-abs(lam))))
    return u


def fused_pmu_frozen_info(gamma: float, L0: float, L1: float) -> tuple[float, tuple[int, int]]:
    """Couple (frozen, reliable) decided from the stage-1 LLRs in one step."""
    if hard_decision(L0) != hard_decision(L1):
        gamma = gamma + min(abs(L0), abs(L1))
    return gamma, (0, hard_decision(L0 + L1))


def fused_pmu_frozen_frozen(gamma: float, L0: float, L1: float) -> float:
    """Couple (frozen, frozen): penalise each negative stage-1 LLR by its magnitude."""
    return gamma + hard_decision(L0) * abs(L0) + hard_decision(L1) * abs(L1)


def fused_reliable_pair(L0: float, L1: float) -> tuple[int, int]:
    """Couple (reliable, reliable): [hd(L0), hd(L1)] F."""
    a, b = hard_decision(L0), hard_decision(L1)
    return a ^ b, b
