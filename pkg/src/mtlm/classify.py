"""Next-token classification over a trained trie model.

Three variants share one trie:

* ib1      -- exact weighted k-NN. A branch-and-bound traversal finds every
              stored context in the k nearest equidistance ranks under the
              weighted overlap distance (mismatch at a position costs that
              position's gain-ratio weight). k counts ranks, not contexts:
              k=1 merges ALL contexts tied at the minimal distance.
* tribl2   -- hybrid. Deterministic descent while the query matches stored
              values level by level; at the first failure the k-NN search
              runs inside the subtree under the last matching node, scoring
              the remaining positions.
* igtree   -- decision-tree descent only: follow matching children until
              stuck, answer with that node's stored distribution.

Mismatch weights are accumulated in trie-level order (highest gain ratio
first), which fixes the floating-point summation order; oracles that verify
these results must sum in the same order.
"""

from __future__ import annotations

import random
from bisect import insort
from dataclasses import dataclass, field

from .errors import (
    EmptyDistributionError,
    NoNeighborsError,
    UnsupportedOperationError,
)
from .trie import ClassDistribution, Model, TrieNode, majority_token


@dataclass
class TiePolicy:
    """How resolve_prediction breaks exact count ties.

    deterministic: highest global (root) frequency, then lowest token ID.
    seeded: uniform choice among tied maxima from one reproducible stream.
    """

    mode: str = "deterministic"
    seed: int | None = None
    _rng: random.Random | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in ("deterministic", "seeded"):
            raise ValueError(f"unknown tie policy mode {self.mode!r}")
        if self.mode == "seeded":
            if self.seed is None:
                raise ValueError("seeded tie policy requires a seed")
            self._rng = random.Random(self.seed)

    @property
    def rng(self) -> random.Random:
        return self._rng


DETERMINISTIC = TiePolicy()


@dataclass
class NeighborResult:
    """Classification output.

    distribution merges the contributing contexts' target counts (for igtree
    it is the answering node's stored distribution). neighbor_count is the
    number of distinct stored contexts merged (0 for igtree, which keeps no
    neighbor provenance). distance is the nearest contributing rank's
    weighted overlap distance; igtree reports the count of unmatched
    trailing features instead. neighbors, when collected, groups
    (context IDs, target, count) per contributing stored context and target.
    """

    distribution: ClassDistribution
    distance: float
    neighbor_count: int
    match_depth: int
    neighbors: list[tuple[tuple[int, ...], int, int]] | None = None


def _query_values(model: Model, context) -> list[int]:
    n = model.context_width
    if len(context) != n:
        raise ValueError(f"query has {len(context)} tokens, model expects {n}")
    return [context[i] for i in model.level_positions()]


def _descend(root: TrieNode, qvals, n: int):
    """Follow exactly-matching children; return (deepest node, depth reached)."""
    node = root
    depth = 0
    while depth < n:
        children = node.children
        if not children:
            break
        child = children.get(qvals[depth])
        if child is None:
            break
        node = child
        depth += 1
    return node, depth


def _search(start: TrieNode, start_level: int, qvals, lweights, n: int, k: int, collect: bool):
    """Branch-and-bound scan of the subtree under `start`.

    Returns (ranks, results): ranks is the ascending list of the k nearest
    distinct distances found, results maps each of them to
    [merged counts, context count, neighbor groups or None]. A subtree is
    skipped only when its accumulated mismatch weight already exceeds the
    current k-th rank distance (equality must still be explored).
    """
    ranks: list[float] = []
    results: dict[float, list] = {}
    path: list[int] = []

    def record(node: TrieNode, dist: float) -> None:
        acc = results.get(dist)
        if acc is None:
            if len(ranks) == k:
                if dist > ranks[-1]:
                    return
                del results[ranks.pop()]
            insort(ranks, dist)
            acc = results[dist] = [{}, 0, [] if collect else None]
        merged = acc[0]
        for t, c in node.counts.items():
            merged[t] = merged.get(t, 0) + c
        acc[1] += 1
        if collect:
            ctx = tuple(path)
            acc[2].extend((ctx, t, c) for t, c in node.counts.items())

    def visit(node: TrieNode, level: int, dist: float) -> None:
        if level == n:
            record(node, dist)
            return
        children = node.children
        if not children:
            return
        qv = qvals[level]
        match = children.get(qv)
        if match is not None:
            path.append(qv)
            visit(match, level + 1, dist)
            path.pop()
        bumped = dist + lweights[level]
        for v, child in children.items():
            if v == qv:
                continue
            if len(ranks) == k and bumped > ranks[-1]:
                continue
            path.append(v)
            visit(child, level + 1, bumped)
            path.pop()

    path.extend(qvals[:start_level])
    visit(start, start_level, 0.0)
    return ranks, results


def _levels_to_context(model: Model, level_values) -> tuple[int, ...]:
    """Map trie-level-ordered values back to a document-ordered context tuple."""
    ctx = [0] * model.context_width
    for level, i in enumerate(model.level_positions()):
        ctx[i] = level_values[level]
    return tuple(ctx)


def _finish(model: Model, ranks, results, match_depth: int, collect: bool) -> NeighborResult:
    if not ranks:
        raise NoNeighborsError("model stores no instances")
    merged: dict[int, int] = {}
    context_count = 0
    groups: list[tuple[tuple[int, ...], int, int]] | None = [] if collect else None
    for d in ranks:
        counts, ctxs, grp = results[d]
        for t, c in counts.items():
            merged[t] = merged.get(t, 0) + c
        context_count += ctxs
        if collect:
            groups.extend((_levels_to_context(model, g[0]), g[1], g[2]) for g in grp)
    if collect:
        groups.sort(key=lambda g: (-g[2], g[0], g[1]))
    return NeighborResult(
        distribution=ClassDistribution(merged),
        distance=ranks[0],
        neighbor_count=context_count,
        match_depth=match_depth,
        neighbors=groups,
    )


def classify_ib1(model: Model, context, k: int = 1, collect_neighbors: bool = False) -> NeighborResult:
    """Exact weighted k-NN over the whole trie (lossless models only)."""
    if model.pruned:
        raise UnsupportedOperationError("ib1 classification needs a lossless trie")
    if k < 1:
        raise ValueError("k must be >= 1")
    qvals = _query_values(model, context)
    n = model.context_width
    ranks, results = _search(model.root, 0, qvals, model.level_weights(), n, k, collect_neighbors)
    _, depth = _descend(model.root, qvals, n)
    return _finish(model, ranks, results, depth, collect_neighbors)


def classify_tribl2(model: Model, context, k: int = 1, collect_neighbors: bool = False) -> NeighborResult:
    """Trie descent on exact matches, k-NN inside the subtree at the first miss."""
    if model.pruned:
        raise UnsupportedOperationError("tribl2 classification needs a lossless trie")
    if k < 1:
        raise ValueError("k must be >= 1")
    qvals = _query_values(model, context)
    n = model.context_width
    node, depth = _descend(model.root, qvals, n)
    if depth == n:
        groups = None
        if collect_neighbors:
            ctx = tuple(context)
            groups = sorted(
                ((ctx, t, c) for t, c in node.counts.items()),
                key=lambda g: (-g[2], g[0], g[1]),
            )
        return NeighborResult(
            distribution=node.distribution,
            distance=0.0,
            neighbor_count=1,
            match_depth=n,
            neighbors=groups,
        )
    ranks, results = _search(node, depth, qvals, model.level_weights(), n, k, collect_neighbors)
    return _finish(model, ranks, results, depth, collect_neighbors)


def classify_igtree(model: Model, context) -> NeighborResult:
    """Single-path descent; answers with the deepest matching node's distribution."""
    qvals = _query_values(model, context)
    n = model.context_width
    node, depth = _descend(model.root, qvals, n)
    return NeighborResult(
        distribution=node.distribution,
        distance=float(n - depth),
        neighbor_count=0,
        match_depth=depth,
        neighbors=None,
    )


def classify(model: Model, context, k: int = 1, collect_neighbors: bool = False) -> NeighborResult:
    """Dispatch on the model's algorithm."""
    if model.algorithm == "igtree":
        return classify_igtree(model, context)
    if model.algorithm == "ib1":
        return classify_ib1(model, context, k, collect_neighbors)
    return classify_tribl2(model, context, k, collect_neighbors)


def normalize(dist: ClassDistribution, mode: str = "proportional", temperature: float = 1.0) -> dict[int, float]:
    """Turn counts into probabilities over the stored entries only.

    proportional: count/total. softmax: exp(count/T) renormalized (computed
    around the max count for stability). Absent tokens keep probability 0.
    """
    if not dist.counts:
        raise EmptyDistributionError("cannot normalize an empty distribution")
    items = dist.items_sorted()
    if mode == "proportional":
        total = dist.total
        return {t: c / total for t, c in items}
    if mode == "softmax":
        if temperature <= 0:
            raise ValueError("softmax temperature must be > 0")
        import math

        m = max(c for _, c in items)
        exps = [(t, math.exp((c - m) / temperature)) for t, c in items]
        z = sum(e for _, e in exps)
        return {t: e / z for t, e in exps}
    raise ValueError(f"unknown normalization mode {mode!r}")


def resolve_prediction(
    dist: ClassDistribution,
    policy: TiePolicy = DETERMINISTIC,
    root_counts: dict[int, int] | None = None,
) -> int:
    """Pick the argmax-count token.

    Deterministic ties fall back to the higher global frequency (the model's
    root distribution, when supplied) and then the lower token ID. Seeded
    ties draw uniformly among the tied maxima from the policy's stream.
    """
    counts = dist.counts
    if not counts:
        raise EmptyDistributionError("cannot resolve an empty distribution")
    if policy.mode == "deterministic":
        return majority_token(counts, root_counts or {})
    best = max(counts.values())
    tied = sorted(t for t, c in counts.items() if c == best)
    if len(tied) == 1:
        return tied[0]
    return tied[policy.rng.randrange(len(tied))]


def predict(model: Model, context, k: int = 1, policy: TiePolicy = DETERMINISTIC) -> int:
    """Classify and resolve in one step using the model's algorithm."""
    result = classify(model, context, k)
    return resolve_prediction(result.distribution, policy, model.root.counts)


@dataclass
class ExplanationReport:
    """Human-readable account of one classification (see render())."""

    algorithm: str
    query: tuple[int, ...]
    prediction: int
    distance: float
    neighbor_count: int
    match_depth: int
    distribution: ClassDistribution
    neighbors: list[tuple[tuple[int, ...], int, int]] | None

    MAX_DISTRIBUTION_LINES = 20

    def render(self, vocab) -> str:
        """One header line, then one line per neighbor group (context tokens,
        target, count, tab-separated). Pruned decision-tree models keep no
        neighbor provenance, so their reports show the answering node's
        distribution and the match depth only."""
        q = " ".join(vocab.text_of(t) for t in self.query)
        pred = vocab.text_of(self.prediction)
        lines = [
            f"query {q} -> prediction {pred} distance {self.distance:g} "
            f"neighbors {self.neighbor_count} depth {self.match_depth}"
        ]
        if self.neighbors is not None:
            for ctx, target, count in self.neighbors:
                ctx_text = " ".join(vocab.text_of(t) for t in ctx)
                lines.append(f"{ctx_text}\t{vocab.text_of(target)}\t{count}")
        else:
            shown = sorted(self.distribution.counts.items(), key=lambda tc: (-tc[1], tc[0]))
            for t, c in shown[: self.MAX_DISTRIBUTION_LINES]:
                lines.append(f"{vocab.text_of(t)}\t{c}")
            hidden = len(shown) - self.MAX_DISTRIBUTION_LINES
            if hidden > 0:
                lines.append(f"(+{hidden} more)")
        return "\n".join(lines) + "\n"


def explain(model: Model, context, k: int = 1) -> ExplanationReport:
    """Classify with neighbor provenance and package the result for display."""
    if model.pruned or model.algorithm == "igtree":
        result = classify_igtree(model, context)
    else:
        result = classify(model, context, k, collect_neighbors=True)
    prediction = resolve_prediction(result.distribution, DETERMINISTIC, model.root.counts)
    return ExplanationReport(
        algorithm=model.algorithm,
        query=tuple(context),
        prediction=prediction,
        distance=result.distance,
        neighbor_count=result.neighbor_count,
        match_depth=result.match_depth,
        distribution=result.distribution,
        neighbors=result.neighbors,
    )
