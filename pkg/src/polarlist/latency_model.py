"""Cycle counts of the list decoder schedule.

Source bits are handled in couples (u_2i, u_2i+1).  Depending on which of the
two are frozen, reliable or unreliable, leaf nodes and list-management (LM)
cycles can be skipped.  ``lscd_latency`` applies the per-case savings to the
baseline count; ``schedule_latency`` gets the same number by counting the
node activations and LM operations of an instrumented decode.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .polar_code import FROZEN, RELIABLE, UNRELIABLE, CodeSpec, is_power_of_two, log2_exact
from .scd import node_cycles

CASES = ("I", "II", "III", "IV", "V", "VI")
SAVINGS = {"I": 4, "II": 4, "III": 1, "IV": 4, "V": 1, "VI": 0}

# (type of u_2i, type of u_2i+1) -> case
_TABLE = {
    (RELIABLE, RELIABLE): "I",
    (FROZEN, RELIABLE): "II",
    (UNRELIABLE, RELIABLE): "III",
    (FROZEN, FROZEN): "IV",
    (FROZEN, UNRELIABLE): "V",
    (UNRELIABLE, UNRELIABLE): "VI",
}


class CoupleWarning(UserWarning):
    """A couple whose bit types cannot occur in a properly constructed code."""


@dataclass(frozen=True)
class CoupleClass:
    index: int
    types: tuple[int, int]
    case: str
    consistent: bool

    @property
    def frozen_count(self) -> int:
        return sum(t == FROZEN for t in self.types)

    @property
    def reliable_count(self) -> int:
        return sum(t == RELIABLE for t in self.types)


def couple_classes(spec: CodeSpec) -> list[CoupleClass]:
    """Classify every couple; impossible ones fall back to case VI with a warning."""
    types = spec.bit_types
    out = []
    bad = []
    for c in range(spec.N // 2):
        pair = (int(types[2 * c]), int(types[2 * c + 1]))
        case = _TABLE.get(pair)
        if case is None:
            bad.append(c)
            out.append(CoupleClass(c, pair, "VI", False))
        else:
            out.append(CoupleClass(c, pair, case, True))
    if bad:
        warnings.warn(f"{len(bad)} couple(s) with an impossible frozen/reliable pattern "
                      f"(first at bits {2 * bad[0]},{2 * bad[0] + 1}); counted as case VI",
                      CoupleWarning, stacklevel=2)
    return out


def classify_couples(spec: CodeSpec) -> dict[str, int]:
    counts = dict.fromkeys(CASES, 0)
    for cc in couple_classes(spec):
        counts[cc.case] += 1
    return counts


def baseline_latency(N: int, M: int) -> int:
    """3N + (N/M) log2(N / 4M) cycles for M processing elements per decoder."""
    if not (is_power_of_two(N) and is_power_of_two(M)):
        raise ValueError(f"N and M must be powers of two, got N={N}, M={M}")
    if not M < N // 2:
        raise ValueError(f"need M < N/2, got N={N}, M={M}")
    return 3 * N + (N // M) * log2_exact(N // (4 * M))


def _normalise_counts(counts) -> dict[str, int]:
    if isinstance(counts, dict):
        out = {k: int(counts.get(k, 0)) for k in CASES}
        extra = set(counts) - set(CASES)
        if extra:
            raise ValueError(f"unknown case labels {sorted(extra)}")
    else:
        seq = list(counts)
        if len(seq) != len(CASES):
            raise ValueError(f"expected {len(CASES)} counts, got {len(seq)}")
        out = dict(zip(CASES, map(int, seq)))
    if any(v < 0 for v in out.values()):
        raise ValueError("counts must be nonnegative")
    return out


def lscd_latency(D: int, counts, N: int | None = None) -> int:
    """D - 4 (N_I + N_II + N_IV) - (N_III + N_V).

    ``counts`` is a mapping case -> count or a sequence in case order.  When
    ``N`` is given the counts must add up to N/2.
    """
    c = _normalise_counts(counts)
    if N is not None and sum(c.values()) != N // 2:
        raise ValueError(f"couple counts sum to {sum(c.values())}, expected N/2 = {N // 2}")
    return D - sum(SAVINGS[k] * v for k, v in c.items())


@dataclass(frozen=True)
class LatencyReport:
    N: int
    M: int
    D: int
    counts: dict
    D_lscd: int

    def to_json(self) -> dict:
        return {"n": self.N, "m": self.M, "d_baseline": self.D,
                "counts": dict(self.counts), "d_lscd": self.D_lscd}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def latency_report(spec: CodeSpec, M: int, counts=None) -> LatencyReport:
    """Report for ``spec``; explicit ``counts`` override the classification."""
    D = baseline_latency(spec.N, M)
    c = classify_couples(spec) if counts is None else _normalise_counts(counts)
    return LatencyReport(spec.N, M, D, c, lscd_latency(D, c, spec.N))


# --------------------------------------------------------------------------
# schedule oracle
# --------------------------------------------------------------------------

def trace_cycles(trace, M: int) -> int:
    """Cycles of a list of (kind, stage) node activations on M PEs."""
    return sum(node_cycles(stage, M) for _, stage in trace)


def schedule_latency(spec: CodeSpec, M: int, reduced: bool = True) -> int:
    """Count the cycles of one decode from its instrumented schedule.

    Baseline: every node of the tree traversal plus one LM cycle per bit.
    Reduced: fused couples (cases I, II, IV) skip their two leaf nodes, and
    LM cycles are only spent on unreliable information bits.
    """
    from .list_decoder import DecodeStats, lscd_decode
    from .scd import scd_decode

    # values do not matter for the schedule; any input works
    llr = np.ones(spec.N)
    if not reduced:
        trace = []
        scd_decode(llr, spec, trace=trace)
        return trace_cycles(trace, M) + spec.N
    stats = DecodeStats()
    lscd_decode(llr, spec, 1, se_enabled=True, fused=True, stats=stats)
    return trace_cycles(stats.trace, M) + len(stats.lm_bits)
