"""Figure rendering for the report path.

Each helper writes one PNG next to the delimited output it illustrates.
matplotlib is imported lazily with the Agg backend so headless runs and
non-plotting commands never pay for it.
"""

from __future__ import annotations

import math

from .evaluate import CurveFit, FrequencyBinning


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def plot_learning_curve(fit: CurveFit, path, title: str = "Next-token accuracy vs. training size") -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    sizes = [s for s, _ in fit.points]
    accs = [a for _, a in fit.points]
    ax.semilogx(sizes, accs, "o", label="measured")
    lo, hi = min(sizes), max(sizes)
    grid = [lo * (hi / lo) ** (i / 200) for i in range(201)] if hi > lo else [lo]
    ax.semilogx(grid, [fit.predict(s) for s in grid], "--",
                label=f"{fit.intercept:.4f} + {fit.slope:.4f} ln(size), r={fit.r:.4f}")
    ax.set_xlabel("training tokens")
    ax.set_ylabel("accuracy")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_frequency_bins(binning: FrequencyBinning, path,
                        title: str = "Training frequency of predicted tokens") -> None:
    plt = _pyplot()
    labels = ["0"]
    values = [binning.zero_count]
    for i, count in enumerate(binning.counts):
        lo = binning.edges[i]
        labels.append(f"1e{int(math.log10(lo))}" if lo >= 1 else str(lo))
        values.append(count)
    if binning.overflow_count:
        labels.append(f">=1e{int(math.log10(binning.edges[-1]))}")
        values.append(binning.overflow_count)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(values)), values)
    ax.set_xticks(range(len(values)), labels, rotation=45, ha="right")
    ax.set_xlabel("training-set frequency bin (lower edge)")
    ax.set_ylabel("predictions")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_distribution_sizes(sizes, path, title: str = "Output distribution sizes") -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    top = max(sizes) if len(sizes) else 1
    bins = [2 ** i for i in range(0, max(1, math.ceil(math.log2(top + 1))) + 1)]
    ax.hist(sizes, bins=bins)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("distinct tokens in output distribution")
    ax.set_ylabel("queries")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
