"""BPSK over AWGN: mapping, noise, channel LLRs and fixed-point quantisation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .polar_code import snr_to_sigma

SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class ChannelConfig:
    """Binary-input AWGN channel; bit 0 maps to +1 and bit 1 to -1."""

    ebno_db: float
    rate: float

    def __post_init__(self):
        if not 0 < self.rate <= 1:
            raise ValueError("rate must be in (0, 1]")
        if not math.isfinite(self.ebno_db):
            raise ValueError("Eb/N0 must be finite")

    @property
    def sigma(self) -> float:
        return max(snr_to_sigma(self.ebno_db, self.rate), SIGMA_FLOOR)


def channel_llr(y, cfg: ChannelConfig):
    """log W(y|0) - log W(y|1) = 2y / sigma^2."""
    return 2.0 * np.asarray(y, dtype=float) / cfg.sigma**2


def frame_rng(master_seed: int, frame_index: int) -> np.random.Generator:
    """Counter-based stream owned by one frame.

    Philox keyed by the master seed, with the frame index in the second counter
    word, so frames never overlap and any worker can regenerate any frame.
    """
    bitgen = np.random.Philox(key=int(master_seed), counter=[0, int(frame_index), 0, 0])
    return np.random.Generator(bitgen)


def transmit_frame(x, cfg: ChannelConfig, rng: np.random.Generator) -> np.ndarray:
    """Map a codeword to BPSK, add white Gaussian noise and return channel LLRs."""
    x = np.asarray(x)
    s = 1.0 - 2.0 * x
    y = s + cfg.sigma * rng.standard_normal(x.shape)
    return channel_llr(y, cfg)


@dataclass(frozen=True)
class Quantizer:
    """Uniform fixed-point model of LLR and path-metric registers.

    Values are rounded to the nearest multiple of ``llr_step``; LLRs saturate at
    +-(2^(llr_bits-1) - 1) steps and metrics live in [0, 2^metric_bits - 1] steps.
    """

    llr_bits: int = 6
    metric_bits: int = 8
    llr_step: float = 1.0

    def __post_init__(self):
        if self.llr_bits < 2 or self.metric_bits < 1:
            raise ValueError("too few quantisation bits")
        if not self.llr_step > 0:
            raise ValueError("quantisation step must be positive")

    @property
    def llr_levels(self) -> int:
        return (1 << (self.llr_bits - 1)) - 1

    @property
    def metric_levels(self) -> int:
        return (1 << self.metric_bits) - 1

    @classmethod
    def for_snr(cls, ebno_db: float, rate: float, llr_bits: int = 6, metric_bits: int = 8) -> Quantizer:
        """Step chosen so saturation sits near 4x the mean channel LLR magnitude."""
        sigma = snr_to_sigma(ebno_db, rate)
        mean_abs = 2.0 / sigma**2
        step = 4.0 * mean_abs / ((1 << (llr_bits - 1)) - 1)
        return cls(llr_bits, metric_bits, step)

    def levels(self, v, kind: str = "llr"):
        """Integer register contents for ``v`` (as floats)."""
        k = np.round(np.asarray(v, dtype=float) / self.llr_step)
        if kind == "llr":
            return np.clip(k, -self.llr_levels, self.llr_levels)
        if kind == "metric":
            return np.clip(k, 0, self.metric_levels)
        raise ValueError(f"unknown quantity kind {kind!r}")


def quantize(v, q: Quantizer, kind: str = "llr"):
    """Quantise ``v`` and return it in real units."""
    out = q.levels(v, kind) * q.llr_step
    return float(out) if np.ndim(out) == 0 else out
