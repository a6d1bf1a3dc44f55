"""Figures for simulation results (written to files, never shown)."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _wilson(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    d = 1 + z * z / n
    c = (p + z * z / (2 * n)) / d
    h = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / d
    return max(c - h, 0.0), min(c + h, 1.0)


def plot_bler(curves: dict, path, title: str | None = None, ber: bool = False) -> Path:
    """Error-rate curves with 95% intervals; ``curves`` maps label -> list of points."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for label, points in curves.items():
        x = [p.ebno_db for p in points]
        if ber:
            y = [p.ber for p in points]
            ax.semilogy(x, y, "o-", ms=4, label=label)
            continue
        y = [p.bler for p in points]
        lo, hi = zip(*(_wilson(p.block_errors, p.frames) for p in points))
        yerr = [[max(a - b, 0) for a, b in zip(y, lo)], [max(b - a, 0) for a, b in zip(y, hi)]]
        ax.errorbar(x, y, yerr=yerr, fmt="o-", ms=4, capsize=2, label=label)
    ax.set_yscale("log")
    ax.set_xlabel("Eb/N0 (dB)")
    ax.set_ylabel("BER" if ber else "BLER")
    ax.grid(True, which="both", ls=":", lw=0.5)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
