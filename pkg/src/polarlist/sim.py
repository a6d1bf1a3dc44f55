"""Monte Carlo BLER/BER simulation.

Frame ``f`` of every SNR point draws its payload, noise and pruning keys from
``frame_rng(seed, f)``, so a run is a pure function of its configuration and
seed whatever the number of workers, and decoders compared at the same seed
see the same noise realisations.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelConfig, Quantizer, frame_rng, transmit_frame
from .polar_code import CodeSpec, build_reliability, polar_transform, select_reliable_set

log = logging.getLogger(__name__)

DECODERS = {
    "scd": "exact",
    "lscd-exact": "exact",
    "lscd-dts": "dts",
    "lscd-dts-advance": "dts_advance",
}
CSV_FIELDS = ("ebno_db", "frames", "block_errors", "bit_errors", "bler", "ber", "crc_miss", "seconds")


def parse_sweep(text: str) -> list[float]:
    """``"A:S:B"`` -> [A, A+S, ..., <= B]; a single number is one point."""
    parts = text.split(":")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ValueError(f"bad Eb/N0 sweep {text!r}") from None
    if len(vals) == 1:
        return vals
    if len(vals) != 3:
        raise ValueError(f"Eb/N0 sweep must look like start:step:stop, got {text!r}")
    a, s, b = vals
    if s <= 0:
        raise ValueError("sweep step must be positive")
    if b < a:
        raise ValueError(f"empty sweep {text!r}")
    k = int(math.floor((b - a) / s + 1e-9))
    return [round(a + j * s, 10) for j in range(k + 1)]


def default_rt_index(decoder: str, L: int) -> int | None:
    if decoder == "lscd-dts-advance":
        return max(L // 2, 3 * L // 4 - 1)
    if decoder == "lscd-dts":
        return L - 1
    return None


@dataclass
class SimConfig:
    spec: CodeSpec
    decoder: str = "lscd-exact"
    list_size: int = 16
    rt_index: int | None = None
    ebno_db: list = field(default_factory=lambda: [1.5])
    max_frames: int = 10_000
    target_block_errors: int = 100
    seed: int = 1
    quantized: bool = False
    se: bool = False  # use the reliable set stored in the code description
    se_epsilon: float | None = None  # or pick one per point from the bound
    p_b_lscd: float | None = None
    workers: int = 1
    chunk: int = 200
    instrument: bool = False
    keep_frames: bool = False  # keep the per-frame block-error flags

    def __post_init__(self):
        if self.decoder not in DECODERS:
            raise ValueError(f"unknown decoder {self.decoder!r}; choose from {sorted(DECODERS)}")
        if self.decoder == "scd":
            self.list_size = 1
        if self.rt_index is None:
            self.rt_index = default_rt_index(self.decoder, self.list_size)
        if self.max_frames < 1 or self.target_block_errors < 1:
            raise ValueError("max_frames and target_block_errors must be at least 1")
        if not self.ebno_db:
            raise ValueError("empty Eb/N0 sweep")
        if self.se_epsilon is not None and self.p_b_lscd is None:
            raise ValueError("se_epsilon needs p_b_lscd")
        if self.workers < 1 or self.chunk < 1:
            raise ValueError("workers and chunk must be positive")
        # surfaces bad list sizes / thresholds before any work starts
        from .list_decoder import _check_list_args
        _check_list_args(self.list_size, DECODERS[self.decoder], self.rt_index)

    @property
    def pruner(self) -> str:
        return DECODERS[self.decoder]

    def describe(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "spec"}
        d["code"] = self.spec.to_json()
        return d


@dataclass
class PointResult:
    ebno_db: float
    frames: int
    block_errors: int
    bit_errors: int
    crc_miss: int
    seconds: float
    reliable_fraction: float = 0.0
    stats: dict = field(default_factory=dict)
    payload_bits: int = 1
    frame_errors: np.ndarray | None = field(default=None, repr=False)

    @property
    def bler(self) -> float:
        return self.block_errors / self.frames

    @property
    def ber(self) -> float:
        return self.bit_errors / (self.frames * self.payload_bits)

    def row(self) -> dict:
        return {"ebno_db": self.ebno_db, "frames": self.frames, "block_errors": self.block_errors,
                "bit_errors": self.bit_errors, "bler": self.bler, "ber": self.ber,
                "crc_miss": self.crc_miss, "seconds": round(self.seconds, 3)}

    def key(self) -> tuple:
        """Everything except wall time; equal for equal config and seed."""
        return (self.ebno_db, self.frames, self.block_errors, self.bit_errors, self.crc_miss)


@dataclass
class SimResult:
    config: dict
    points: list

    @property
    def bler(self) -> np.ndarray:
        return np.array([p.bler for p in self.points])

    def write_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            w.writeheader()
            for p in self.points:
                w.writerow(p.row())

    def write_sidecar(self, path) -> None:
        doc = {"config": self.config,
               "points": [dict(p.row(), reliable_fraction=p.reliable_fraction, stats=p.stats)
                          for p in self.points]}
        Path(path).write_text(json.dumps(doc, indent=1) + "\n")


# --------------------------------------------------------------------------
# frame processing
# --------------------------------------------------------------------------

def _point_spec(cfg: SimConfig, ebno_db: float) -> CodeSpec:
    spec = cfg.spec
    if cfg.se_epsilon is not None:
        profile = build_reliability(spec.N, ebno_db, spec.rate)
        return spec.with_reliable_set(select_reliable_set(spec, profile, cfg.se_epsilon, cfg.p_b_lscd))
    return spec


def _make_decoder(cfg: SimConfig, spec: CodeSpec):
    from ._kernel import KernelDecoder

    q = None
    if cfg.quantized:
        design = spec.design_snr_db if math.isfinite(spec.design_snr_db) else cfg.ebno_db[0]
        q = Quantizer.for_snr(design, spec.rate)
    se = cfg.se or cfg.se_epsilon is not None
    return KernelDecoder(spec, cfg.list_size, cfg.pruner, se, rt_index=cfg.rt_index,
                         quantizer=q, instrument=cfg.instrument)


def _run_frames(cfg: SimConfig, spec: CodeSpec, ebno_db: float, start: int, stop: int):
    """Decode frames ``start..stop-1``; per-frame (block error, bit errors, crc miss) and stats."""
    dec = _make_decoder(cfg, spec)
    ch = ChannelConfig(ebno_db, spec.rate)
    info = spec.info_mask
    kp = spec.payload_bits
    out = np.zeros((stop - start, 3), dtype=np.int64)
    for f in range(start, stop):
        rng = frame_rng(cfg.seed, f)
        payload = rng.integers(0, 2, kp, dtype=np.uint8)
        u = spec.source_word(payload)
        llr = transmit_frame(polar_transform(u), ch, rng)
        if dec.quantizer is not None:
            llr = dec.quantizer.levels(llr)
        u_hat, ok, _ = dec(llr, dec.draw_uniforms(rng))
        wrong = not np.array_equal(u_hat, u)
        bit_err = int(np.count_nonzero(u_hat[info][:kp] != payload))
        out[f - start] = (wrong, bit_err, wrong and ok)
    return out, dec.stats.copy()


def _worker(args):
    return _run_frames(*args)


def run_point(cfg: SimConfig, ebno_db: float, pool: ProcessPoolExecutor | None = None) -> PointResult:
    """Simulate one SNR point up to the error target or the frame budget.

    Frames are decoded in fixed chunks and the count is cut at the first frame
    reaching the error target, so the result does not depend on how many
    chunks were in flight.
    """
    spec = _point_spec(cfg, ebno_db)
    t0 = time.perf_counter()
    frames = blk = bits = miss = 0
    stats = np.zeros(4, dtype=np.int64)
    flags = []
    start = 0
    width = cfg.workers if pool is not None else 1
    done = False
    while not done and start < cfg.max_frames:
        jobs = []
        for _ in range(width):
            if start >= cfg.max_frames:
                break
            stop = min(start + cfg.chunk, cfg.max_frames)
            jobs.append((cfg, spec, ebno_db, start, stop))
            start = stop
        results = pool.map(_worker, jobs) if pool is not None else map(_worker, jobs)
        for rows, st in results:
            if done:
                continue
            cum = blk + np.cumsum(rows[:, 0])
            hit = np.flatnonzero(cum >= cfg.target_block_errors)
            take = len(rows) if len(hit) == 0 else int(hit[0]) + 1
            rows = rows[:take]
            flags.append(rows[:, 0].astype(bool))
            frames += take
            blk += int(rows[:, 0].sum())
            bits += int(rows[:, 1].sum())
            miss += int(rows[:, 2].sum())
            stats += st  # instrumentation counts whole chunks
            done = blk >= cfg.target_block_errors
    names = ("prune_events", "prop1_checks", "prop1_violations", "short_lists")
    res = PointResult(float(ebno_db), frames, blk, bits, miss, time.perf_counter() - t0,
                      len(spec.reliable_set) / max(spec.K, 1) if (cfg.se or cfg.se_epsilon) else 0.0,
                      dict(zip(names, map(int, stats))) if cfg.instrument else {}, spec.payload_bits,
                      np.concatenate(flags) if cfg.keep_frames and flags else None)
    log.info("Eb/N0 %.2f dB: %d frames, %d block errors, BLER %.3e", ebno_db, frames, blk, res.bler)
    return res


def monotonicity_flags(points, z: float = 3.0) -> list[tuple[int, float]]:
    """Adjacent points where BLER rises with SNR; the rise is given in standard errors.

    Rises above ``z`` standard errors are returned and warned about; smaller
    ones are treated as noise.
    """
    flags = []
    for k in range(1, len(points)):
        a, b = points[k - 1], points[k]
        if b.bler <= a.bler:
            continue
        var = a.bler * (1 - a.bler) / a.frames + b.bler * (1 - b.bler) / b.frames
        score = (b.bler - a.bler) / math.sqrt(var) if var > 0 else math.inf
        if score >= z:
            flags.append((k, score))
            warnings.warn(f"BLER rises from {a.ebno_db} to {b.ebno_db} dB by {score:.1f} sigma",
                          RuntimeWarning, stacklevel=2)
    return flags


def run_sweep(cfg: SimConfig, on_point=None) -> SimResult:
    """Run every SNR point; ``on_point`` is called with each finished record."""
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        points = []
        for e in cfg.ebno_db:
            p = run_point(cfg, e, pool)
            points.append(p)
            if on_point is not None:
                on_point(p)
    finally:
        if pool is not None:
            pool.shutdown()
    monotonicity_flags(points)
    return SimResult(cfg.describe(), points)


def paired_worse_pvalue(errors_a, errors_b) -> float:
    """One-sided exact McNemar p-value for "decoder a fails more often than b".

    Both arrays hold block-error flags of the same frames (same seed), so only
    the frames where exactly one decoder fails carry information.
    """
    from scipy.stats import binomtest

    a = np.asarray(errors_a, dtype=bool)
    b = np.asarray(errors_b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError("paired comparison needs the same frames for both decoders")
    only_a = int(np.count_nonzero(a & ~b))
    only_b = int(np.count_nonzero(b & ~a))
    if only_a + only_b == 0:
        return 1.0
    return float(binomtest(only_a, only_a + only_b, 0.5, alternative="greater").pvalue)
