"""PNG figures for the experiment reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return path


def component_lengths(types: list[str], lengths: list[int], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for t in sorted(set(types)):
        ls = [l for ty, l in zip(types, lengths) if ty == t]
        ax.hist(ls, bins=np.arange(0.5, max(lengths) + 1.5), alpha=0.6, label=t)
    ax.set_xlabel("component length")
    ax.set_ylabel("count")
    ax.set_yscale("log")
    ax.legend(fontsize=7)
    return _save(fig, path)


def spectrum(classes: list[str], lengths: list[int], energies: list[np.ndarray], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    colors = {}
    for c, l, e in zip(classes, lengths, energies):
        col = colors.setdefault(c, f"C{len(colors)}")
        ax.plot(np.full(len(e), l), e, ".", color=col, ms=3, label=c if c not in ax.get_legend_handles_labels()[1] else None)
    ax.set_xlabel("path length")
    ax.set_ylabel("energy")
    ax.legend(fontsize=7)
    return _save(fig, path)


def collapse(prob: np.ndarray, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    T = len(prob)
    ax.bar(np.arange(1, T + 1), prob, width=1.0)
    ax.axvline(T / 2 + 0.5, color="k", lw=0.8, ls="--")
    ax.set_xlabel("site")
    ax.set_ylabel("probability")
    return _save(fig, path)


def gap_histogram(min_gaps: np.ndarray, threshold: float, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    g = np.log2(np.maximum(min_gaps, 2.0**-60))
    ax.hist(g, bins=40)
    ax.axvline(np.log2(threshold), color="r", lw=1)
    ax.set_xlabel("log2 minimum gap")
    ax.set_ylabel("samples")
    return _save(fig, path)


def bar_with_bound(labels: list[str], values: list[float], bound: float, ylabel: str, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(labels, values)
    ax.axhline(bound, color="r", lw=1)
    ax.set_ylabel(ylabel)
    return _save(fig, path)


def running_successes(results: list[bool], threshold: float, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    r = np.cumsum(results) / np.arange(1, len(results) + 1)
    ax.plot(np.arange(1, len(r) + 1), r)
    ax.axhline(threshold, color="r", lw=1)
    ax.set_xlabel("round")
    ax.set_ylabel("success rate")
    ax.set_ylim(0, 1.05)
    return _save(fig, path)
