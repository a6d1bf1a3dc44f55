"""LLR-domain successive-cancellation decoding.

The scheduling tree is walked iteratively.  Stage ``t`` holds ``2**t`` LLRs;
stage ``n`` is the channel.  For bit ``i > 0`` the walk starts with a g node at
stage ``ctz(i)`` and then runs f nodes down to stage 0; bit 0 starts with an f
node at stage ``n - 1``.
"""
from __future__ import annotations

import math

import numpy as np

from .polar_code import FROZEN, CodeSpec, log2_exact


def f_approx(a, b):
    """Min-sum check-node update: sign(a) xor sign(b) applied to min(|a|, |b|)."""
    m = np.minimum(np.abs(a), np.abs(b))
    out = np.where((np.asarray(a) < 0) ^ (np.asarray(b) < 0), -m, m)
    return float(out) if out.ndim == 0 else out


def f_exact(a, b):
    """Exact box-plus, 2 atanh(tanh(a/2) tanh(b/2)), in an overflow-free form."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m = np.minimum(np.abs(a), np.abs(b))
    s = np.where((a < 0) ^ (b < 0), -1.0, 1.0)
    out = s * m + np.log1p(np.exp(-np.abs(a + b))) - np.log1p(np.exp(-np.abs(a - b)))
    return float(out) if out.ndim == 0 else out


def g_func(a, b, s):
    """Variable-node update b + (-1)^s a."""
    out = np.where(np.asarray(s) != 0, np.asarray(b) - a, np.asarray(b) + a)
    return float(out) if out.ndim == 0 else out


def hard_decision(llr) -> int:
    return 0 if llr >= 0 else 1


F_KERNELS = {"approx": f_approx, "exact": f_exact}


def ctz(i: int) -> int:
    return (i & -i).bit_length() - 1


def _psum_offset(t: int, n: int) -> int:
    return 0 if t == n - 1 else (1 << t) - 1


class _Buffer:
    __slots__ = ("data", "refs")

    def __init__(self, data):
        self.data = data
        self.refs = 1


class StageMemory:
    """LLR and partial-sum storage of one SC decoder instance.

    Stage LLR buffers may be shared between instances (lazy copy); a shared
    buffer is replaced by a private one right before it is written.  Partial
    sums always belong to one instance: N/2 bits holding the transform of the
    most recent completed left block of every stage.
    """

    def __init__(self, N: int, channel=None):
        self.N = N
        self.n = log2_exact(N)
        self.bufs = [_Buffer(np.zeros(1 << t)) for t in range(self.n)]
        self.channel = np.zeros(N) if channel is None else np.asarray(channel, dtype=float)
        self.psum = np.zeros(max(N // 2, 1), dtype=np.uint8)
        self.copies = 0  # stage buffers privatised by copy-on-write

    # -- LLR storage ------------------------------------------------------

    def llr(self, t: int) -> np.ndarray:
        return self.channel if t == self.n else self.bufs[t].data

    def writable(self, t: int) -> np.ndarray:
        buf = self.bufs[t]
        if buf.refs > 1:
            # every write covers the whole stage, so a fresh buffer suffices
            buf.refs -= 1
            self.bufs[t] = _Buffer(np.empty_like(buf.data))
            self.copies += 1
        return self.bufs[t].data

    def share(self) -> StageMemory:
        """New instance sharing every stage buffer; partial sums are copied."""
        other = StageMemory.__new__(StageMemory)
        other.N, other.n, other.channel = self.N, self.n, self.channel
        other.bufs = list(self.bufs)
        for b in other.bufs:
            b.refs += 1
        other.psum = self.psum.copy()
        other.copies = 0
        return other

    def deep_copy(self) -> StageMemory:
        other = StageMemory.__new__(StageMemory)
        other.N, other.n, other.channel = self.N, self.n, self.channel
        other.bufs = [_Buffer(b.data.copy()) for b in self.bufs]
        other.psum = self.psum.copy()
        other.copies = 0
        return other

    def release(self) -> None:
        for b in self.bufs:
            b.refs -= 1

    def refcounts(self) -> list[int]:
        return [b.refs for b in self.bufs]

    # -- partial sums ---------------------------------------------------

    def left_sum(self, t: int) -> np.ndarray:
        off = _psum_offset(t, self.n)
        return self.psum[off:off + (1 << t)]


def update_partial_sums(mem: StageMemory, u_hat: int, i: int) -> None:
    """Absorb decoded bit ``i``.

    The transform of every block completed by bit ``i`` is assembled from the
    stored left-block sums ([left ^ right, right]) until a block that is
    itself a left half is reached; that one is stored for its g node.
    """
    n = mem.n
    x = np.array([u_hat & 1], dtype=np.uint8)
    t = 0
    while True:
        if (i >> t) & 1 == 0:
            off = _psum_offset(t, n)
            mem.psum[off:off + (1 << t)] = x
            return
        if t == n - 1:
            return  # the whole word is complete
        x = np.concatenate([mem.left_sum(t) ^ x, x])
        t += 1


def compute_leaf(mem: StageMemory, i: int, f=f_approx, stop: int = 0, trace=None) -> None:
    """Run the nodes producing the leaf LLR of bit ``i`` (down to stage ``stop``)."""
    n = mem.n
    if i == 0:
        top = n - 1
    else:
        top = ctz(i)
        h = 1 << top
        src = mem.llr(top + 1)
        out = mem.writable(top)
        out[:] = g_func(src[:h], src[h:], mem.left_sum(top))
        if trace is not None:
            trace.append(("g", top))
        top -= 1
    for t in range(top, stop - 1, -1):
        h = 1 << t
        src = mem.llr(t + 1)
        out = mem.writable(t)
        out[:] = f(src[:h], src[h:])
        if trace is not None:
            trace.append(("f", t))


def scd_decode(llr_in, spec: CodeSpec, f: str = "approx", trace=None) -> np.ndarray:
    """Successive-cancellation decoding; returns the estimated source word."""
    llr_in = np.asarray(llr_in, dtype=float)
    if llr_in.shape != (spec.N,):
        raise ValueError(f"expected {spec.N} LLRs, got shape {llr_in.shape}")
    fk = F_KERNELS[f]
    mem = StageMemory(spec.N, llr_in)
    types = spec.bit_types
    u_hat = np.zeros(spec.N, dtype=np.uint8)
    for i in range(spec.N):
        compute_leaf(mem, i, fk, trace=trace)
        lam = mem.llr(0)[0]
        u = 0 if types[i] == FROZEN else hard_decision(lam)
        u_hat[i] = u
        update_partial_sums(mem, u, i)
    return u_hat


def node_cycles(stage: int, pe_count: int) -> int:
    """Cycles a node with 2**stage functions takes on ``pe_count`` processing elements."""
    return max(1, math.ceil((1 << stage) / pe_count))
