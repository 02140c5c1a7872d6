"""Report figures, rendered off-screen next to the CSV they summarize."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy.stats import binom  # noqa: E402

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def size(width=5.0):
    return (width, width * GOLDEN)


def save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path


def chunk_error_histogram(rows, summary, path) -> Path:
    """Wrong chunks per frame against Binomial(N, p_hat), with the 2 N p_hat line."""
    errs = np.array([r["chunk_errors"] for r in rows])
    N = summary["layout"]["chunks"]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=size())
        edges = np.arange(errs.max() + 2) - 0.5
        ax.hist(errs, bins=edges, density=True, color="0.6", label="frames")
        p = summary["p_i_hat"]["value"] if isinstance(summary.get("p_i_hat"), dict) else None
        if p is not None:
            ks = np.arange(0, max(errs.max(), 2 * N * p) + 2)
            ax.plot(ks, binom.pmf(ks, N, p), "k.-", lw=0.8, label=f"Binomial({N}, {p:.3f})")
            ax.axvline(2 * N * p, color="C3", ls="--", lw=1, label="2 N p")
        ax.set_xlabel("wrong chunks per frame")
        ax.set_ylabel("fraction of frames")
        ax.legend(frameon=False, loc="upper left")
        return save(fig, path)


def failure_mode_bars(summary, path) -> Path:
    counts = summary["chunk_failures"]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=size())
        names = list(counts)
        ax.bar(range(len(names)), [counts[n] for n in names], color="0.4")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels([n.replace("_", "\n") for n in names])
        ax.set_ylabel("wrong chunks")
        return save(fig, path)


def running_fer(rows, path) -> Path:
    fe = np.cumsum([r["frame_error"] for r in rows])
    n = np.arange(1, len(rows) + 1)
    rate = fe / n
    half = 1.96 * np.sqrt(np.maximum(rate * (1 - rate), 1e-12) / n)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=size())
        ax.plot(n, rate, "k", lw=1)
        ax.fill_between(n, np.clip(rate - half, 0, 1), np.clip(rate + half, 0, 1), color="0.85")
        ax.set_xlabel("frames")
        ax.set_ylabel("frame error rate")
        return save(fig, path)


def campaign_figures(rows, summary, out_dir) -> dict:
    out_dir = Path(out_dir)
    return {
        "fig_chunk_errors": chunk_error_histogram(rows, summary, out_dir / "chunk_errors.png"),
        "fig_failure_modes": failure_mode_bars(summary, out_dir / "failure_modes.png"),
        "fig_fer": running_fer(rows, out_dir / "running_fer.png"),
    }


def polar_bench_figure(rows, path) -> Path:
    """BER and BLER against crossover for a polar benchmark table."""
    p = [r["p"] for r in rows]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=size())
        ax.semilogy(p, [max(r["ber"], 1e-7) for r in rows], "o-", color="k", label="BER")
        ax.semilogy(p, [max(r["bler"], 1e-7) for r in rows], "s--", color="0.5", label="BLER")
        ax.set_xlabel("BSC crossover")
        ax.set_ylabel("error rate")
        ax.legend(frameon=False)
        return save(fig, path)
