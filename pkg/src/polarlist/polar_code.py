"""Polar code construction, GF(2) encoding and CRC concatenation.

A code is described by :class:`CodeSpec`: block length, the frozen set, the
information set (which carries payload followed by CRC bits in ascending
index order) and an optional reliable subset used by selective expansion.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import log_ndtr
from scipy.optimize import brentq

# Bit-type codes shared with the decoders.
FROZEN = 0
UNRELIABLE = 1
RELIABLE = 2


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def log2_exact(n: int) -> int:
    if not is_power_of_two(n):
        raise ValueError(f"length must be a power of two, got {n}")
    return n.bit_length() - 1


# --------------------------------------------------------------------------
# Encoding
# --------------------------------------------------------------------------

def polar_transform(u) -> np.ndarray:
    """Return ``u F^{(x)n}`` over GF(2), F = [[1, 0], [1, 1]].

    Works on the last axis, so a batch of words of shape ``(B, N)`` is
    transformed in one call.  The transform is its own inverse.
    """
    x = np.array(u, dtype=np.uint8, copy=True)
    N = x.shape[-1]
    n = log2_exact(N)
    lead = x.shape[:-1]
    for s in range(n):
        h = 1 << s
        v = x.reshape(lead + (N // (2 * h), 2, h))
        v[..., 0, :] ^= v[..., 1, :]
    return x


# --------------------------------------------------------------------------
# Gaussian-approximation density evolution
# --------------------------------------------------------------------------

_PHI_A, _PHI_B, _PHI_C = 0.4527, 0.86, 0.0218
_PHI_KNEE = 0.867861


def _log_phi_power(x: float) -> float:
    return -_PHI_A * x**_PHI_B + _PHI_C


def _log_phi_tail(x: float) -> float:
    return 0.5 * math.log(math.pi / x) - x / 4.0 + math.log1p(-10.0 / (7.0 * x))


# the usual switch at x=10 leaves an upward jump in phi; switch where the pieces meet
_PHI_TAIL = brentq(lambda x: _log_phi_power(x) - _log_phi_tail(x), 10.0, 20.0, xtol=1e-14)


def _log_phi(x: float) -> float:
    """log of the piecewise phi approximation (phi(0) = 1, continuous, strictly decreasing)."""
    if x <= 0.0:
        return 0.0
    if x < _PHI_KNEE:
        return 0.0564 * x * x - 0.48560 * x
    if x < _PHI_TAIL:
        return _log_phi_power(x)
    return _log_phi_tail(x)


def _phi_inverse_log(log_y: float, tol: float = 1e-12) -> float:
    """Solve log phi(x) = log_y for x >= 0 by bisection to relative accuracy ``tol``."""
    if log_y >= 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while _log_phi(hi) > log_y:
        lo, hi = hi, 2.0 * hi
    # relative tolerance, so tiny means (very noisy channels) keep their order
    for _ in range(400):
        if hi - lo <= tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if _log_phi(mid) > log_y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _minus_mean(m: float) -> float:
    # log(1 - (1 - phi)^2), accurate when phi is close to 0 or to 1
    lp = _log_phi(m)
    if lp > -0.5:
        return _phi_inverse_log(math.log1p(-math.expm1(lp) ** 2))
    return _phi_inverse_log(lp + math.log(2.0 - math.exp(lp)))


def snr_to_sigma(ebno_db: float, rate: float) -> float:
    return math.sqrt(1.0 / (2.0 * rate * 10.0 ** (ebno_db / 10.0)))


@dataclass(frozen=True)
class ReliabilityProfile:
    """Per-index error-probability estimates of the synthetic channels."""

    pe: np.ndarray
    design_snr_db: float
    mean_llr: np.ndarray = field(repr=False)
    log_pe: np.ndarray = field(repr=False)

    def __post_init__(self):
        pe = np.asarray(self.pe, dtype=float)
        if not np.all(np.isfinite(pe)) or pe.min(initial=0.0) < 0 or pe.max(initial=0.0) > 1:
            raise ValueError("error probabilities must be finite and in [0, 1]")

    @property
    def N(self) -> int:
        return len(self.pe)

    def ranking(self, indices=None) -> np.ndarray:
        """Indices sorted from most to least reliable; ties go to the lower index."""
        idx = np.arange(self.N) if indices is None else np.asarray(sorted(indices), dtype=int)
        order = np.lexsort((idx, self.log_pe[idx]))
        return idx[order]


def build_reliability(N: int, design_snr_db: float, rate_for_snr: float = 0.5) -> ReliabilityProfile:
    """Gaussian-approximation density evolution for BPSK over AWGN.

    The channel LLR is modelled as N(m, 2m) with m = 2/sigma^2; each polarisation
    step maps m to (phi^-1(1 - (1 - phi(m))^2), 2m).  The index bits are read
    MSB first, a 0 selecting the degraded branch.
    """
    log2_exact(N)
    if not math.isfinite(design_snr_db):
        raise ValueError("design SNR must be finite")
    if not 0 < rate_for_snr <= 1:
        raise ValueError("rate must be in (0, 1]")
    sigma = snr_to_sigma(design_snr_db, rate_for_snr)
    means = [2.0 / sigma**2]
    while len(means) < N:
        nxt = []
        for m in means:
            nxt.append(_minus_mean(m))
            nxt.append(2.0 * m)
        means = nxt
    mean = np.array(means)
    z = -np.sqrt(mean / 2.0)
    log_pe = log_ndtr(z)
    return ReliabilityProfile(pe=np.exp(log_pe), design_snr_db=float(design_snr_db),
                              mean_llr=mean, log_pe=log_pe)


# --------------------------------------------------------------------------
# CRC
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Crc:
    width: int
    poly: int
    init: int = 0
    xorout: int = 0

    def remainder(self, bits) -> int:
        """Bitwise, MSB-first, non-reflected CRC register after feeding ``bits``."""
        w = self.width
        mask = (1 << w) - 1
        reg = self.init
        for b in bits:
            top = ((reg >> (w - 1)) & 1) ^ int(b)
            reg = (reg << 1) & mask
            if top:
                reg ^= self.poly
        return reg ^ self.xorout

    def bits(self, payload) -> np.ndarray:
        reg = self.remainder(payload)
        return np.array([(reg >> (self.width - 1 - k)) & 1 for k in range(self.width)], dtype=np.uint8)


CRC_TABLE = {
    8: Crc(8, 0x07),
    16: Crc(16, 0x1021, init=0xFFFF),  # CRC-16/CCITT-FALSE
    24: Crc(24, 0x864CFB),
}


def get_crc(r: int) -> Crc | None:
    if r == 0:
        return None
    try:
        return CRC_TABLE[r]
    except KeyError:
        raise ValueError(f"unsupported CRC width {r}; choose from 0, {sorted(CRC_TABLE)}") from None


def crc_append(payload, r: int = 16) -> np.ndarray:
    payload = np.asarray(payload, dtype=np.uint8)
    crc = get_crc(r)
    if crc is None:
        return payload.copy()
    return np.concatenate([payload, crc.bits(payload)])


def crc_check(message, r: int = 16) -> bool:
    message = np.asarray(message, dtype=np.uint8)
    if message.ndim != 1 or len(message) < r:
        raise ValueError(f"message of length {message.size} is shorter than the {r}-bit CRC")
    crc = get_crc(r)
    if crc is None:
        return True
    k = len(message) - r
    tail = 0
    for b in message[k:]:
        tail = (tail << 1) | int(b)
    return crc.remainder(message[:k]) == tail


# --------------------------------------------------------------------------
# Code description
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CodeSpec:
    """A polar code with its frozen, information and reliable index sets."""

    N: int
    K: int
    r: int
    frozen_set: tuple[int, ...]
    reliable_set: tuple[int, ...] = ()
    design_snr_db: float = 1.5

    def __post_init__(self):
        n = log2_exact(self.N)
        if n < 1:
            raise ValueError("N must be at least 2")
        frozen = tuple(sorted(int(i) for i in self.frozen_set))
        reliable = tuple(sorted(int(i) for i in self.reliable_set))
        object.__setattr__(self, "frozen_set", frozen)
        object.__setattr__(self, "reliable_set", reliable)
        if len(set(frozen)) != len(frozen) or any(not 0 <= i < self.N for i in frozen):
            raise ValueError("frozen set must hold distinct indices in [0, N)")
        if len(frozen) != self.N - self.K:
            raise ValueError(f"|frozen set| = {len(frozen)} but N - K = {self.N - self.K}")
        if not 0 <= self.r <= self.K:
            raise ValueError("CRC width must lie in [0, K]")
        get_crc(self.r)
        if not set(reliable) <= set(self.info_set):
            raise ValueError("reliable set must be a subset of the information set")

    @property
    def n(self) -> int:
        return self.N.bit_length() - 1

    @property
    def payload_bits(self) -> int:
        return self.K - self.r

    @property
    def rate(self) -> float:
        """Payload rate; the CRC is counted as overhead."""
        return self.payload_bits / self.N

    @cached_property
    def info_set(self) -> tuple[int, ...]:
        frozen = set(self.frozen_set)
        return tuple(i for i in range(self.N) if i not in frozen)

    @cached_property
    def unreliable_set(self) -> tuple[int, ...]:
        rel = set(self.reliable_set)
        return tuple(i for i in self.info_set if i not in rel)

    @cached_property
    def bit_types(self) -> np.ndarray:
        """Per-index code: FROZEN, UNRELIABLE or RELIABLE."""
        t = np.full(self.N, UNRELIABLE, dtype=np.int8)
        t[list(self.frozen_set)] = FROZEN
        t[list(self.reliable_set)] = RELIABLE
        return t

    @cached_property
    def info_mask(self) -> np.ndarray:
        return self.bit_types != FROZEN

    def with_reliable_set(self, reliable) -> CodeSpec:
        return CodeSpec(self.N, self.K, self.r, self.frozen_set, tuple(reliable), self.design_snr_db)

    # -- encoding -----------------------------------------------------------

    def message(self, payload) -> np.ndarray:
        """Payload followed by its CRC (K bits)."""
        payload = np.asarray(payload, dtype=np.uint8)
        if payload.shape != (self.payload_bits,):
            raise ValueError(f"payload must have {self.payload_bits} bits, got {payload.shape}")
        return crc_append(payload, self.r)

    def source_word(self, payload) -> np.ndarray:
        u = np.zeros(self.N, dtype=np.uint8)
        u[self.info_mask] = self.message(payload)
        return u

    def encode(self, payload) -> np.ndarray:
        return polar_transform(self.source_word(payload))

    def crc_ok(self, u_hat) -> bool:
        return crc_check(np.asarray(u_hat, dtype=np.uint8)[self.info_mask], self.r)

    # -- serialisation ----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "n_bits": self.N,
            "k": self.K,
            "crc_bits": self.r,
            "design_snr_db": self.design_snr_db,
            "frozen_set": list(self.frozen_set),
            "reliable_set": list(self.reliable_set),
        }

    @classmethod
    def from_json(cls, doc: dict) -> CodeSpec:
        try:
            return cls(N=int(doc["n_bits"]), K=int(doc["k"]), r=int(doc["crc_bits"]),
                       frozen_set=tuple(doc["frozen_set"]),
                       reliable_set=tuple(doc.get("reliable_set", ())),
                       design_snr_db=float(doc.get("design_snr_db", float("nan"))))
        except KeyError as exc:
            raise ValueError(f"code description is missing field {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> CodeSpec:
        return cls.from_json(json.loads(Path(path).read_text()))


def select_information_set(profile: ReliabilityProfile, K: int, r: int = 0) -> CodeSpec:
    """Take the K indices with the smallest error probability as the information set."""
    N = profile.N
    if not 0 <= K <= N:
        raise ValueError(f"K must lie in [0, {N}], got {K}")
    info = set(profile.ranking()[:K].tolist())
    frozen = tuple(i for i in range(N) if i not in info)
    return CodeSpec(N, K, r, frozen, (), profile.design_snr_db)


def degradation_bound(reliable, profile: ReliabilityProfile, p_b_lscd: float) -> float:
    """Upper bound eta on the relative BLER increase caused by skipping ``reliable``."""
    return math.fsum(profile.pe[i] for i in reliable) / p_b_lscd


def select_reliable_set(spec: CodeSpec, profile: ReliabilityProfile, epsilon: float,
                        p_b_lscd: float) -> tuple[int, ...]:
    """Largest reliable subset of the information set whose bound eta stays <= epsilon.

    The information set is sorted by error probability and the longest prefix
    satisfying the constraint is returned (an optimal solution, since every
    term of the sum is non-negative).
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not 0 < p_b_lscd <= 1:
        raise ValueError("p_b_lscd must be in (0, 1]")
    if profile.N != spec.N:
        raise ValueError("profile length does not match the code")
    order = profile.ranking(spec.info_set)
    # eta grows with the prefix, so bisect on the prefix length
    lo, hi = 0, len(order)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if degradation_bound(order[:mid], profile, p_b_lscd) <= epsilon:
            lo = mid
        else:
            hi = mid - 1
    return tuple(sorted(int(i) for i in order[:lo]))


def construct(N: int, K: int, r: int = 16, design_snr_db: float = 1.5, *,
              epsilon: float | None = None, p_b_lscd: float | None = None,
              se_snr_db: float | None = None) -> CodeSpec:
    """Build a code; the reliable set is filled only when ``epsilon`` is given.

    The design rate used for the SNR-to-noise conversion is the payload rate
    (K - r) / N.
    """
    rate = max(K - r, 1) / N
    spec = select_information_set(build_reliability(N, design_snr_db, rate), K, r)
    spec = CodeSpec(N, K, r, spec.frozen_set, (), float(design_snr_db))
    if epsilon is not None:
        if p_b_lscd is None:
            raise ValueError("selective expansion needs p_b_lscd")
        snr = design_snr_db if se_snr_db is None else se_snr_db
        profile = build_reliability(N, snr, rate)
        spec = spec.with_reliable_set(select_reliable_set(spec, profile, epsilon, p_b_lscd))
    return spec
