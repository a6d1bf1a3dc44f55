"""Compiled list decoder used by the Monte Carlo harness.

Same decisions as :func:`polarlist.list_decoder.lscd_decode` (slot order,
tie rules, consumption of DTS random keys), but with flat arrays:

* stage LLRs live in per-stage row pools; ``ptr[p, t]`` is the row used by
  physical path ``p`` at stage ``t`` and ``refs[t, row]`` its share count,
* partial sums and bit histories are copied on clone,
* ``phys[j]`` maps list slot ``j`` to its physical path.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .polar_code import FROZEN, RELIABLE, UNRELIABLE, CodeSpec, get_crc

PRUNER_CODES = {"exact": 0, "dts": 1, "dts_advance": 2}
N_STATS = 4  # prune events, Prop-1 checks, Prop-1 violations, short lists


@njit(cache=True, inline="always")
def _softplus(x):
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


@njit(cache=True)
def _leaves(llr, chan, ptr, refs, psum, phys, size, i, n, L, f_exact, lmax, lams):
    """Leaf LLR of bit ``i`` for list slots ``0..size-1`` into ``lams``.

    Everything is written out in one body: helper calls taking arrays would
    cost a reference-count round trip per call.
    """
    if i == 0:
        first, g = n - 1, False
    else:
        first, g = 0, True
        while (i >> first) & 1 == 0:
            first += 1
    for j in range(size):
        p = phys[j]
        # private rows for every stage about to be written (copy on write)
        for t in range(first, -1, -1):
            row = ptr[p, t]
            if refs[t, row] > 1:
                refs[t, row] -= 1
                r = 0
                while refs[t, r] != 0:
                    r += 1
                refs[t, r] = 1
                ptr[p, t] = r
        top = first
        if g:
            h = 1 << top
            w = ptr[p, top]
            off = 0 if top == n - 1 else h - 1
            if top + 1 == n:
                for k in range(h):
                    a = chan[k]
                    b = chan[k + h]
                    v = b + (1 - 2 * np.float64(psum[p, off + k])) * a
                    if lmax > 0:
                        v = min(max(v, -lmax), lmax)
                    llr[w, h - 1 + k] = v
            else:
                src = ptr[p, top + 1]
                sb = 2 * h - 1
                for k in range(h):
                    a = llr[src, sb + k]
                    b = llr[src, sb + k + h]
                    v = b + (1 - 2 * np.float64(psum[p, off + k])) * a
                    if lmax > 0:
                        v = min(max(v, -lmax), lmax)
                    llr[w, h - 1 + k] = v
            top -= 1
        for t in range(top, -1, -1):
            h = 1 << t
            w = ptr[p, t]
            if t + 1 == n:
                for k in range(h):
                    llr[w, h - 1 + k] = _f(chan[k], chan[k + h], f_exact)
            else:
                src = ptr[p, t + 1]
                sb = 2 * h - 1
                for k in range(h):
                    llr[w, h - 1 + k] = _f(llr[src, sb + k], llr[src, sb + k + h], f_exact)
        lams[j] = llr[ptr[p, 0], 0]


@njit(cache=True, inline="always")
def _f(a, b, exact):
    m = min(abs(a), abs(b))
    if not exact:
        return math.copysign(m, a * b)
    s = -1.0 if (a < 0) != (b < 0) else 1.0
    return s * m + math.log1p(math.exp(-abs(a + b))) - math.log1p(math.exp(-abs(a - b)))


@njit(cache=True)
def _absorb(psum, phys, us, size, i, n, x):
    """Incremental partial-sum update of every slot; blocks are assembled in ``x``."""
    if n == 0:
        return
    for j in range(size):
        p = phys[j]
        x[0] = us[j]
        width = 1
        t = 0
        while True:
            if (i >> t) & 1 == 0:
                off = 0 if t == n - 1 else (1 << t) - 1
                for k in range(width):
                    psum[p, off + k] = x[k]
                break
            if t == n - 1:
                break
            off = (1 << t) - 1
            for k in range(width):
                x[width + k] = x[k]
                x[k] = psum[p, off + k] ^ x[k]
            width *= 2
            t += 1


@njit(cache=True)
def _isort(keys, idx, m):
    """Stable insertion sort of ``idx[:m]`` by ``keys[idx]`` (small m)."""
    for a in range(1, m):
        v = idx[a]
        kv = keys[v]
        b = a - 1
        while b >= 0 and keys[idx[b]] > kv:
            idx[b + 1] = idx[b]
            b -= 1
        idx[b + 1] = v


@njit(cache=True)
def _prune_exact(children, size, L, keep, arranged, order):
    """Mark the L smallest children; ties prefer even children, then low parents."""
    for l in range(size):
        arranged[l] = children[2 * l]
        arranged[size + l] = children[2 * l + 1]
    for q in range(2 * size):
        order[q] = q
        keep[q] = False
    _isort(arranged, order, 2 * size)
    for k in range(L):
        o = order[k]
        keep[2 * o if o < size else 2 * (o - size) + 1] = True


@njit(cache=True)
def _tta(pm, L, rt_index, perm, lower, lv, tmp):
    """Permutation of the threshold-tracking partial sort; returns (AT, RT)."""
    h = L // 2
    for j in range(L):
        tmp[j] = j
    _isort(pm, tmp, h)
    # second sorter works on indices h..L-1
    for j in range(h):
        lower[j] = h + j
    _isort(pm, lower, h)
    for j in range(h):
        a, b = tmp[j], lower[h - 1 - j]
        if pm[a] <= pm[b]:
            perm[j], lv[j] = a, b
        else:
            perm[j], lv[j] = b, a
    for j in range(h):
        lower[j] = lv[j]
    _isort(pm, lower, h)
    for j in range(h):
        perm[h + j] = lower[j]
    return pm[perm[h]], pm[perm[rt_index]]


@njit(cache=True)
def _crc_pass(bits_row, info_idx, K, r, poly, init, xorout):
    if r == 0:
        return True
    mask = (1 << r) - 1
    reg = init
    for k in range(K - r):
        top = ((reg >> (r - 1)) & 1) ^ bits_row[info_idx[k]]
        reg = (reg << 1) & mask
        if top:
            reg ^= poly
    reg ^= xorout
    for k in range(r):
        if bits_row[info_idx[K - r + k]] != (reg >> (r - 1 - k)) & 1:
            return False
    return True


@njit(cache=True)
def _trace(hist_u, hist_parent, slot, N, out):
    q = slot
    for i in range(N - 1, -1, -1):
        out[i] = hist_u[i, q]
        q = hist_parent[i, q]


@njit(cache=True)
def _prop1(metric, children, size, L, stats):
    srt = np.sort(metric[:size])
    for l in range(L):
        tv = srt[l]
        le = 0
        while srt[le] < tv:
            le += 1
        c = 0
        for q in range(2 * size):
            if children[q] < tv:
                c += 1
        stats[1] += 1
        if c < le or c > 2 * le:
            stats[2] += 1


@njit(cache=True)
def decode(chan, types, info_idx, r, poly, init, xorout, L, pruner, rt_index,
           f_exact, pmu_exact, lmax, mmax, uniforms, instrument, out_bits, stats):
    """Decode one frame; writes the winner to ``out_bits`` and returns (crc_ok, metric).

    ``lmax``/``mmax`` > 0 select the integer fixed-point mode.  Bit decisions
    are kept as a traceback (decision and parent slot per bit) instead of
    per-path histories.
    """
    N = chan.shape[0]
    n = 0
    while (1 << n) < N:
        n += 1
    K = info_idx.shape[0]
    half = max(N // 2, 1)
    llr = np.zeros((L, max(N - 1, 1)))
    ptr = np.zeros((L, max(n, 1)), dtype=np.int64)
    refs = np.zeros((max(n, 1), L), dtype=np.int64)
    psum = np.zeros((L, half), dtype=np.uint8)
    hist_u = np.zeros((N, L), dtype=np.uint8)
    hist_parent = np.zeros((N, L), dtype=np.int64)
    for t in range(n):
        refs[t, 0] = 1
    phys = np.zeros(L, dtype=np.int64)
    metric = np.zeros(L)
    lams = np.empty(L)
    children = np.empty(2 * L)
    hd = np.empty(L, dtype=np.uint8)
    new_phys = np.empty(L, dtype=np.int64)
    new_metric = np.empty(L)
    new_u = np.empty(L, dtype=np.uint8)
    used = np.zeros(L, dtype=np.bool_)
    is_free = np.zeros(L, dtype=np.bool_)
    keep = np.zeros(2 * L, dtype=np.bool_)
    arranged = np.empty(2 * L)
    order = np.empty(2 * L, dtype=np.int64)
    band = np.empty(2 * L, dtype=np.int64)
    padded = np.empty(L)
    perm = np.empty(L, dtype=np.int64)
    lower = np.empty(L, dtype=np.int64)
    lv = np.empty(L, dtype=np.int64)
    tmp = np.empty(L, dtype=np.int64)
    scratch = np.empty(half, dtype=np.uint8)
    us = np.zeros(L, dtype=np.uint8)
    size = 1
    ucur = 0

    for i in range(N):
        _leaves(llr, chan, ptr, refs, psum, phys, size, i, n, L, f_exact, lmax, lams)
        kind = types[i]
        if kind == FROZEN or kind == RELIABLE:
            for j in range(size):
                lam = lams[j]
                u = 0
                if kind == FROZEN:
                    if pmu_exact:
                        metric[j] = metric[j] + _softplus(-lam)
                    elif lam < 0:
                        metric[j] += abs(lam)
                else:
                    u = 0 if lam >= 0 else 1
                    if pmu_exact:
                        metric[j] += math.log1p(math.exp(-abs(lam)))
                us[j] = u
                hist_u[i, j] = u
                hist_parent[i, j] = j
            _absorb(psum, phys, us, size, i, n, scratch)
        else:
            for j in range(size):
                lam = lams[j]
                u = 0 if lam >= 0 else 1
                hd[j] = u
                if pmu_exact:
                    children[2 * j] = metric[j] + _softplus((2 * u - 1) * lam)
                    children[2 * j + 1] = metric[j] + _softplus((1 - 2 * u) * lam)
                else:
                    children[2 * j] = metric[j]
                    children[2 * j + 1] = metric[j] + abs(lam)
            m2 = 2 * size
            if m2 <= L:
                for q in range(m2):
                    keep[q] = True
            else:
                if instrument:
                    stats[0] += 1
                    if not pmu_exact and size == L:
                        _prop1(metric, children, size, L, stats)
                if pruner == 0:
                    _prune_exact(children, size, L, keep, arranged, order)
                elif pruner == 1:
                    for q in range(L):
                        padded[q] = metric[q] if q < size else np.inf
                    at, rt = _tta(padded, L, rt_index, perm, lower, lv, tmp)
                    n_acc = 0
                    n_band = 0
                    for q in range(m2):
                        m = children[q]
                        keep[q] = m < at
                        if m < at:
                            n_acc += 1
                        elif m <= rt:
                            band[n_band] = q
                            n_band += 1
                    need = L - n_acc
                    if n_band <= need:
                        for q in range(n_band):
                            keep[band[q]] = True
                        if n_acc + n_band < L and instrument:
                            stats[3] += 1
                    elif need > 0:
                        for q in range(n_band):
                            order[q] = q
                        _isort(uniforms[ucur:ucur + n_band], order, n_band)
                        ucur += n_band
                        for q in range(need):
                            keep[band[order[q]]] = True
                else:
                    at, rt = _tta(metric, L, rt_index, perm, lower, lv, tmp)
                    h = L // 2
                    for q in range(L):
                        keep[2 * perm[q]] = True
                        keep[2 * perm[q] + 1] = False
                    k = 0
                    for q in range(L):
                        if k < h and children[2 * perm[q] + 1] <= rt:
                            keep[2 * perm[q] + 1] = True
                            k += 1
                    for q in range(L - k, L):
                        keep[2 * perm[q]] = False

            # survivors in candidate order: slot q continues parent c // 2
            for j in range(size):
                used[j] = False
            for c in range(m2):
                if keep[c]:
                    used[c // 2] = True
            for j in range(L):
                is_free[j] = True
            for j in range(size):
                if used[j]:
                    is_free[phys[j]] = False
                else:
                    for t in range(n):
                        refs[t, ptr[phys[j], t]] -= 1
            for j in range(size):
                used[j] = False
            m_new = 0
            for c in range(m2):
                if not keep[c]:
                    continue
                l = c // 2
                pp = phys[l]
                if not used[l]:
                    used[l] = True
                    new_phys[m_new] = pp
                else:
                    dst = 0
                    while not is_free[dst]:
                        dst += 1
                    is_free[dst] = False
                    for t in range(n):
                        ptr[dst, t] = ptr[pp, t]
                        refs[t, ptr[pp, t]] += 1
                    for k in range(half):
                        psum[dst, k] = psum[pp, k]
                    new_phys[m_new] = dst
                new_metric[m_new] = children[c]
                new_u[m_new] = hd[l] if c % 2 == 0 else 1 - hd[l]
                hist_u[i, m_new] = new_u[m_new]
                hist_parent[i, m_new] = l
                m_new += 1
            for q in range(m_new):
                phys[q] = new_phys[q]
                metric[q] = new_metric[q]
            _absorb(psum, phys, new_u, m_new, i, n, scratch)
            size = m_new
        if mmax > 0:
            lo = metric[0]
            for j in range(1, size):
                lo = min(lo, metric[j])
            for j in range(size):
                metric[j] = min(metric[j] - lo, mmax)

    for j in range(size):
        order[j] = j
    _isort(metric, order, size)
    for q in range(size):
        _trace(hist_u, hist_parent, order[q], N, out_bits)
        if _crc_pass(out_bits, info_idx, K, r, poly, init, xorout):
            return True, metric[order[q]]
    _trace(hist_u, hist_parent, order[0], N, out_bits)
    return False, metric[order[0]]


class KernelDecoder:
    """Reusable compiled decoder bound to one code and configuration."""

    def __init__(self, spec: CodeSpec, L: int, pruner: str = "exact", se_enabled: bool = False, *,
                 rt_index: int | None = None, f: str = "approx", pmu: str = "approx",
                 quantizer=None, instrument: bool = False):
        from .list_decoder import _check_list_args

        _check_list_args(L, pruner, rt_index)
        self.spec = spec
        self.L = int(L)
        self.pruner = pruner
        self.rt_index = self.L - 1 if rt_index is None else int(rt_index)
        types = spec.bit_types.copy()
        if not se_enabled:
            types[types == RELIABLE] = UNRELIABLE
        self.types = types
        self.info_idx = np.flatnonzero(spec.info_mask).astype(np.int64)
        crc = get_crc(spec.r)
        self.crc = (spec.r, crc.poly, crc.init, crc.xorout) if crc else (0, 0, 0, 0)
        self.f_exact = f == "exact"
        self.pmu_exact = pmu == "exact"
        self.quantizer = quantizer
        if quantizer is not None:
            self.lmax, self.mmax = float(quantizer.llr_levels), float(quantizer.metric_levels)
        else:
            self.lmax = self.mmax = 0.0
        self.instrument = instrument
        self.stats = np.zeros(N_STATS, dtype=np.int64)
        # upper bound on random keys one frame can consume
        self.n_uniforms = int(np.count_nonzero(types == UNRELIABLE)) * 2 * self.L if pruner == "dts" else 0
        self._empty = np.zeros(0)

    def draw_uniforms(self, rng: np.random.Generator) -> np.ndarray:
        return rng.random(self.n_uniforms) if self.n_uniforms else self._empty

    def __call__(self, llr, uniforms=None):
        """Returns ``(u_hat, crc_ok, metric)``; ``llr`` in register levels when quantised."""
        llr = np.ascontiguousarray(llr, dtype=np.float64)
        out = np.zeros(self.spec.N, dtype=np.uint8)
        if uniforms is None:
            uniforms = self._empty
        r, poly, init, xorout = self.crc
        ok, metric = decode(llr, self.types, self.info_idx, r, poly, init, xorout, self.L,
                            PRUNER_CODES[self.pruner], self.rt_index, self.f_exact, self.pmu_exact,
                            self.lmax, self.mmax, uniforms, self.instrument, out, self.stats)
        return out, bool(ok), float(metric)
