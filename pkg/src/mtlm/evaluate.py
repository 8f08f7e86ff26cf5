"""Evaluation harness: accuracy, coverage-aware perplexity, memorization,
distribution-size statistics, frequency binning, latency, and log-linear
learning-curve fits.

The per-token prediction log is the single source of truth: every metric is
a fold over its records, so reports can always be recounted from the log.
Perplexity follows the coverage convention: targets assigned probability 0
are excluded from the average (their count is reported as 1 - coverage)
rather than flooring their probability.
"""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .classify import DETERMINISTIC, classify, resolve_prediction
from .corpus import TokenStream, window_instances
from .errors import EmptyStreamError, UnderdeterminedFitError, UndefinedPerplexityError
from .trie import ClassDistribution, Model

LOG_COLUMNS = ("position", "target", "predicted", "probability", "dist_size", "distance", "match_depth")


@dataclass
class PredictionRecord:
    """One prediction-log line."""

    position: int
    target: int
    predicted: int
    probability: float
    dist_size: int
    distance: float
    match_depth: int


@dataclass
class EvalReport:
    token_count: int
    correct_count: int
    accuracy: float
    perplexity: float | None
    coverage: float
    mean_dist_size: float
    median_dist_size: float
    tokens_per_second: float | None = None
    latency_p50: float | None = None
    latency_p95: float | None = None

    def as_dict(self) -> dict:
        return {
            "token_count": self.token_count,
            "correct_count": self.correct_count,
            "accuracy": self.accuracy,
            "perplexity": self.perplexity,
            "coverage": self.coverage,
            "mean_dist_size": self.mean_dist_size,
            "median_dist_size": self.median_dist_size,
            "tokens_per_second": self.tokens_per_second,
            "latency_p50": self.latency_p50,
            "latency_p95": self.latency_p95,
        }

    def render(self) -> str:
        lines = []
        for key, value in self.as_dict().items():
            if value is None:
                continue
            if isinstance(value, float):
                lines.append(f"{key}\t{value:.6g}")
            else:
                lines.append(f"{key}\t{value}")
        return "\n".join(lines) + "\n"


def probability_of(dist: ClassDistribution, target: int, mode: str = "proportional",
                   temperature: float = 1.0) -> float:
    """Probability the normalized distribution assigns to one token (0 if absent)."""
    count = dist.counts.get(target)
    if count is None or dist.total == 0:
        return 0.0
    if mode == "proportional":
        return count / dist.total
    if mode == "softmax":
        m = max(dist.counts.values())
        z = sum(math.exp((c - m) / temperature) for c in dist.counts.values())
        return math.exp((count - m) / temperature) / z
    raise ValueError(f"unknown normalization mode {mode!r}")


def run_predictions(
    model: Model,
    test: TokenStream,
    k: int = 1,
    normalization: str = "proportional",
    temperature: float = 1.0,
    timed: bool = False,
):
    """Classify every windowed test instance; returns (records, latency seconds).

    Latencies cover the classify call only (no windowing, logging, or I/O)
    and are collected only when timed is set.
    """
    records: list[PredictionRecord] = []
    latencies: list[float] = [] if timed else None
    root_counts = model.root.counts
    perf = time.perf_counter
    for pos, inst in enumerate(window_instances(test, model.context_width, model.vocab.boundary_id)):
        if timed:
            t0 = perf()
            result = classify(model, inst.context, k)
            latencies.append(perf() - t0)
        else:
            result = classify(model, inst.context, k)
        dist = result.distribution
        predicted = resolve_prediction(dist, DETERMINISTIC, root_counts)
        records.append(
            PredictionRecord(
                position=pos,
                target=inst.target,
                predicted=predicted,
                probability=probability_of(dist, inst.target, normalization, temperature),
                dist_size=len(dist.counts),
                distance=result.distance,
                match_depth=result.match_depth,
            )
        )
    return records, latencies


def accuracy_from_records(records: Sequence[PredictionRecord]) -> tuple[int, int, float]:
    if not records:
        raise EmptyStreamError("accuracy over an empty test stream is undefined")
    correct = sum(1 for r in records if r.predicted == r.target)
    return len(records), correct, correct / len(records)


def perplexity_from_records(records: Sequence[PredictionRecord]) -> tuple[float, float]:
    """(perplexity over covered targets, coverage fraction)."""
    if not records:
        raise EmptyStreamError("perplexity over an empty test stream is undefined")
    logs = [math.log2(r.probability) for r in records if r.probability > 0.0]
    coverage = len(logs) / len(records)
    if not logs:
        raise UndefinedPerplexityError("no target received non-zero probability")
    return 2.0 ** (-sum(logs) / len(logs)), coverage


def distribution_sizes_from_records(records: Sequence[PredictionRecord]) -> tuple[float, float]:
    if not records:
        raise EmptyStreamError("no records to size")
    sizes = [r.dist_size for r in records]
    return statistics.fmean(sizes), float(statistics.median(sizes))


def _quantile(sorted_values: Sequence[float], q: float) -> float:
    idx = max(0, math.ceil(q * len(sorted_values)) - 1)
    return sorted_values[idx]


def evaluate_model(
    model: Model,
    test: TokenStream,
    k: int = 1,
    normalization: str = "proportional",
    temperature: float = 1.0,
    timed: bool = True,
):
    """Full evaluation pass; returns (EvalReport, prediction records)."""
    records, latencies = run_predictions(model, test, k, normalization, temperature, timed=timed)
    token_count, correct, accuracy = accuracy_from_records(records)
    try:
        perplexity, coverage = perplexity_from_records(records)
    except UndefinedPerplexityError:
        perplexity, coverage = None, 0.0
    mean_size, median_size = distribution_sizes_from_records(records)
    report = EvalReport(
        token_count=token_count,
        correct_count=correct,
        accuracy=accuracy,
        perplexity=perplexity,
        coverage=coverage,
        mean_dist_size=mean_size,
        median_dist_size=median_size,
    )
    if timed and latencies:
        total = sum(latencies)
        ordered = sorted(latencies)
        report.tokens_per_second = len(latencies) / total if total > 0 else float("inf")
        report.latency_p50 = float(statistics.median(ordered))
        report.latency_p95 = _quantile(ordered, 0.95)
    return report, records


def eval_accuracy(model: Model, test: TokenStream, k: int = 1):
    """Accuracy fields only: (token_count, correct_count, accuracy)."""
    records, _ = run_predictions(model, test, k)
    return accuracy_from_records(records)


def eval_perplexity(model: Model, test: TokenStream, normalization: str = "proportional",
                    temperature: float = 1.0, k: int = 1) -> tuple[float, float]:
    records, _ = run_predictions(model, test, k, normalization, temperature)
    return perplexity_from_records(records)


def eval_memorization(model: Model, train_prefix: TokenStream, k: int = 1) -> float:
    """Accuracy over material the model was trained on (same procedure as eval_accuracy)."""
    return eval_accuracy(model, train_prefix, k)[2]


def distribution_stats(model: Model, test: TokenStream, k: int = 1) -> tuple[float, float]:
    """(mean, median) count of distinct tokens per output distribution."""
    records, _ = run_predictions(model, test, k)
    return distribution_sizes_from_records(records)


def measure_latency(model: Model, test: TokenStream, k: int = 1):
    """(tokens per second, p50 seconds, p95 seconds) over per-token classification."""
    _, latencies = run_predictions(model, test, k, timed=True)
    if not latencies:
        raise EmptyStreamError("no instances to time")
    total = sum(latencies)
    ordered = sorted(latencies)
    tps = len(latencies) / total if total > 0 else float("inf")
    return tps, float(statistics.median(ordered)), _quantile(ordered, 0.95)


@dataclass
class FrequencyBinning:
    """Histogram of predicted-token training frequencies over log10 bins.

    counts[i] covers [edges[i], edges[i+1]); zero_count collects frequencies
    below edges[0] (in particular, tokens never seen in training) and
    overflow_count those at or above edges[-1].
    """

    edges: tuple[int, ...]
    zero_count: int
    counts: tuple[int, ...]
    overflow_count: int

    @property
    def total(self) -> int:
        return self.zero_count + sum(self.counts) + self.overflow_count


def auto_edges(max_frequency: int) -> tuple[int, ...]:
    """Powers of 10 covering [1, max_frequency]."""
    top = 1
    edges = [1]
    while top <= max(max_frequency, 1):
        top *= 10
        edges.append(top)
    return tuple(edges)


def frequency_bins(predictions: Iterable[int], train_freq: dict[int, int],
                   edges: Sequence[int] | None = None) -> FrequencyBinning:
    """Bin each predicted token by its training-set frequency."""
    preds = list(predictions)
    if edges is None:
        max_f = max((train_freq.get(t, 0) for t in preds), default=1)
        edges = auto_edges(max_f)
    edges = tuple(edges)
    if len(edges) < 2 or any(a >= b for a, b in zip(edges, edges[1:])):
        raise ValueError("edges must be ascending with at least two entries")
    counts = [0] * (len(edges) - 1)
    zero = 0
    overflow = 0
    for t in preds:
        f = train_freq.get(t, 0)
        if f < edges[0]:
            zero += 1
        elif f >= edges[-1]:
            overflow += 1
        else:
            # edges are few (log-spaced); linear scan beats bisect overhead here
            for i in range(len(edges) - 1):
                if f < edges[i + 1]:
                    counts[i] += 1
                    break
    return FrequencyBinning(edges=edges, zero_count=zero, counts=tuple(counts), overflow_count=overflow)


@dataclass
class CurveFit:
    """Least-squares fit of accuracy = intercept + slope * ln(size)."""

    intercept: float
    slope: float
    r: float
    points: list[tuple[float, float]] = field(default_factory=list)

    def predict(self, size: float) -> float:
        return self.intercept + self.slope * math.log(size)


def fit_loglinear(points: Iterable[tuple[float, float]]) -> CurveFit:
    """Fit (training size, accuracy) pairs against ln(size).

    r is the Pearson correlation between fitted and observed accuracies,
    clamped to [-1, 1]; a fit with zero variance on either side degenerates
    to r=1 when residuals vanish and r=0 otherwise.
    """
    pts = [(float(s), float(a)) for s, a in points]
    sizes = {s for s, _ in pts}
    if len(sizes) < 2:
        raise UnderdeterminedFitError("need at least two points with distinct sizes")
    if any(s <= 0 for s in sizes):
        raise ValueError("training sizes must be positive")
    x = np.log([s for s, _ in pts])
    y = np.array([a for _, a in pts])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = intercept + slope * x
    resid = float(np.max(np.abs(fitted - y))) if len(pts) else 0.0
    if np.std(fitted) == 0.0 or np.std(y) == 0.0:
        r = 1.0 if resid < 1e-12 else 0.0
    else:
        r = float(np.corrcoef(fitted, y)[0, 1])
    r = max(-1.0, min(1.0, r))
    return CurveFit(intercept=float(intercept), slope=float(slope), r=r, points=pts)


def write_prediction_log(records: Iterable[PredictionRecord], fh) -> None:
    fh.write("\t".join(LOG_COLUMNS) + "\n")
    for r in records:
        fh.write(
            f"{r.position}\t{r.target}\t{r.predicted}\t{r.probability:.17g}"
            f"\t{r.dist_size}\t{r.distance:.17g}\t{r.match_depth}\n"
        )


def read_prediction_log(fh) -> list[PredictionRecord]:
    header = fh.readline().rstrip("\n").split("\t")
    if tuple(header) != LOG_COLUMNS:
        raise ValueError(f"unexpected log header {header!r}")
    records = []
    for line in fh:
        pos, target, predicted, prob, size, dist, depth = line.rstrip("\n").split("\t")
        records.append(
            PredictionRecord(
                position=int(pos),
                target=int(target),
                predicted=int(predicted),
                probability=float(prob),
                dist_size=int(size),
                distance=float(dist),
                match_depth=int(depth),
            )
        )
    return records
