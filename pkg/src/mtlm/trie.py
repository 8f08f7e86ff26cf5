"""Prefix-trie model storage: batch build, incremental insertion, decision-tree
pruning, statistics, and structural comparison.

Every training instance contributes its full context path to the trie, one
feature level per position in gain-ratio order (for language data this is
reverse context order: the level under the root tests w-1, the next w-2, and
so on). Each node keeps the sparse next-token distribution of all instances
whose path passes through it, so the root holds the global target-token
distribution and deeper nodes hold increasingly specific ones.

Pruning (decision-tree mode) deletes childless nodes whose majority token
agrees with their parent's, bottom-up, and never edits a retained node's
distribution.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .corpus import Instance, Vocabulary
from .errors import UnsupportedOperationError
from .weights import FeatureWeights

ALGORITHMS = ("ib1", "tribl2", "igtree")


class ClassDistribution:
    """Sparse next-token outcome distribution: token ID -> positive count."""

    __slots__ = ("counts", "total")

    def __init__(self, counts: dict[int, int] | None = None, total: int | None = None):
        self.counts = counts if counts is not None else {}
        self.total = total if total is not None else sum(self.counts.values())

    def __len__(self) -> int:
        return len(self.counts)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ClassDistribution)
            and self.total == other.total
            and self.counts == other.counts
        )

    def __repr__(self) -> str:
        return f"ClassDistribution({self.counts!r}, total={self.total})"

    def items_sorted(self):
        """(token, count) pairs in ascending token-ID order."""
        return sorted(self.counts.items())


class TrieNode:
    """One trie node; the root has value None and depth 0.

    counts/total inline the node's ClassDistribution to keep the per-node
    footprint down; children is None until the first child arrives.
    """

    __slots__ = ("value", "depth", "counts", "total", "children")

    def __init__(self, value: int | None, depth: int):
        self.value = value
        self.depth = depth
        self.counts: dict[int, int] = {}
        self.total = 0
        self.children: dict[int, "TrieNode"] | None = None

    @property
    def distribution(self) -> ClassDistribution:
        """Read-only view of this node's distribution (shares the counts dict)."""
        return ClassDistribution(self.counts, self.total)

    def sorted_children(self) -> list["TrieNode"]:
        if not self.children:
            return []
        return [self.children[v] for v in sorted(self.children)]


@dataclass
class Model:
    """A trained memory-based language model: weights, vocabulary, and trie."""

    algorithm: str
    context_width: int
    weights: FeatureWeights
    vocab: Vocabulary
    root: TrieNode
    pruned: bool = False
    instance_count: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def feature_order(self) -> tuple[int, ...]:
        return self.weights.feature_order

    def level_positions(self) -> list[int]:
        """Context-tuple index probed at each trie level (level 0 first)."""
        n = self.context_width
        return [n - 1 - p for p in self.feature_order]

    def level_weights(self) -> list[float]:
        """Gain-ratio weight charged for a mismatch at each trie level."""
        gr = self.weights.gain_ratio
        return [gr[p] for p in self.feature_order]


def majority_token(counts: dict[int, int], root_counts: dict[int, int]) -> int | None:
    """Deterministic majority: highest count, then highest global (root) count,
    then lowest token ID. Returns None for an empty distribution."""
    best_tok = None
    best_key = None
    for tok, cnt in counts.items():
        key = (cnt, root_counts.get(tok, 0), -tok)
        if best_key is None or key > best_key:
            best_key = key
            best_tok = tok
    return best_tok


def _insert_path(root: TrieNode, context, target: int, level_index) -> None:
    node = root
    counts = node.counts
    counts[target] = counts.get(target, 0) + 1
    node.total += 1
    for i in level_index:
        v = context[i]
        children = node.children
        if children is None:
            children = node.children = {}
        child = children.get(v)
        if child is None:
            child = children[v] = TrieNode(v, node.depth + 1)
        counts = child.counts
        counts[target] = counts.get(target, 0) + 1
        child.total += 1
        node = child


def build_trie(
    instances: Iterable[Instance],
    weights: FeatureWeights,
    n: int,
    algorithm: str = "tribl2",
    vocab: Vocabulary | None = None,
    metadata: dict | None = None,
) -> Model:
    """Batch-build a lossless trie from an instance stream."""
    if weights.arity != n:
        raise ValueError(f"weights arity {weights.arity} != context width {n}")
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    root = TrieNode(None, 0)
    level_index = [n - 1 - p for p in weights.feature_order]
    count = 0
    for inst in instances:
        _insert_path(root, inst.context, inst.target, level_index)
        count += 1
    if vocab is None:
        vocab = Vocabulary.from_entries([])
    return Model(
        algorithm=algorithm,
        context_width=n,
        weights=weights,
        vocab=vocab,
        root=root,
        pruned=False,
        instance_count=count,
        metadata=metadata or {},
    )


def insert_instance(model: Model, inst: Instance) -> Model:
    """Add one instance to a lossless model; equivalent to batch-building with it included."""
    if model.pruned:
        raise UnsupportedOperationError(
            "cannot insert into a pruned decision-tree model; re-prune from a lossless trie"
        )
    if len(inst.context) != model.context_width:
        raise ValueError(
            f"instance arity {len(inst.context)} != context width {model.context_width}"
        )
    _insert_path(model.root, inst.context, inst.target, model.level_positions())
    model.instance_count += 1
    return model


def extend(model: Model, instances: Iterable[Instance]) -> int:
    """Insert a batch of instances (checkpoint continuation); returns how many."""
    if model.pruned:
        raise UnsupportedOperationError(
            "cannot insert into a pruned decision-tree model; re-prune from a lossless trie"
        )
    level_index = model.level_positions()
    root = model.root
    added = 0
    for inst in instances:
        _insert_path(root, inst.context, inst.target, level_index)
        added += 1
    model.instance_count += added
    return added


def prune_igtree(model: Model) -> Model:
    """Prune the trie in place for decision-tree classification.

    Bottom-up: a node is deleted iff all of its children were deleted (or it
    had none) and its majority token equals its parent's under the
    deterministic tie rule. Retained distributions are untouched; the root
    always survives. The model's algorithm becomes "igtree".
    """
    if model.pruned:
        raise UnsupportedOperationError("model is already pruned")
    root_counts = model.root.counts

    def prune(node: TrieNode) -> int | None:
        m = majority_token(node.counts, root_counts)
        children = node.children
        if children:
            for v in list(children):
                child = children[v]
                child_majority = prune(child)
                if not child.children and child_majority == m:
                    del children[v]
            if not children:
                node.children = None
        return m

    prune(model.root)
    model.pruned = True
    model.algorithm = "igtree"
    return model


def iter_nodes(root: TrieNode) -> Iterator[TrieNode]:
    """Pre-order traversal, children in ascending token-ID order."""
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        if node.children:
            stack.extend(node.sorted_children()[::-1])


def node_count(model: Model) -> int:
    count = 0
    for _ in iter_nodes(model.root):
        count += 1
    return count


def stats(model: Model) -> dict:
    """Node count, depth histogram, and an in-memory bytes estimate.

    The estimate sums the CPython footprint of each node object and its two
    dicts; shared token/count int objects are not attributed.
    """
    nodes = 0
    depth_hist: dict[int, int] = {}
    byte_total = 0
    for node in iter_nodes(model.root):
        nodes += 1
        depth_hist[node.depth] = depth_hist.get(node.depth, 0) + 1
        byte_total += sys.getsizeof(node) + sys.getsizeof(node.counts)
        if node.children is not None:
            byte_total += sys.getsizeof(node.children)
    return {
        "nodes": nodes,
        "depth_histogram": dict(sorted(depth_hist.items())),
        "bytes_estimate": byte_total,
    }


def tries_equal(a: TrieNode, b: TrieNode) -> bool:
    """Deep structural equality: same shape, values, and distributions."""
    stack = [(a, b)]
    while stack:
        x, y = stack.pop()
        if x.value != y.value or x.depth != y.depth:
            return False
        if x.total != y.total or x.counts != y.counts:
            return False
        xc = x.children or {}
        yc = y.children or {}
        if xc.keys() != yc.keys():
            return False
        for v in xc:
            stack.append((xc[v], yc[v]))
    return True


def models_equal(a: Model, b: Model, check_metadata: bool = False) -> bool:
    """Structural model equality (trie, weights, vocab, flags, counts)."""
    if (
        a.algorithm != b.algorithm
        or a.context_width != b.context_width
        or a.pruned != b.pruned
        or a.instance_count != b.instance_count
    ):
        return False
    if a.weights != b.weights:
        return False
    if a.vocab.entries != b.vocab.entries or a.vocab.boundary_id != b.vocab.boundary_id:
        return False
    if check_metadata and a.metadata.get("corpus_digest") != b.metadata.get("corpus_digest"):
        return False
    return tries_equal(a.root, b.root)
