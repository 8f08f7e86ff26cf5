"""Information-theoretic feature weighting over an instance stream.

Each context position gets an information gain (entropy reduction of the
target-token label when the position's value is known) and a gain ratio
(information gain divided by the position's own value entropy, the split
info). Both are computed in one streaming pass of sufficient statistics
and then frozen into the model.

Position convention: feature position p (0-based) is the token p+1 places
before the target, so p=0 weighs w-1 and p=n-1 weighs w-n. An Instance
context is stored in document order [w-n .. w-1]; the value at position p
is context[n-1-p].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .corpus import Instance
from .errors import UndefinedEntropyError, UndefinedWeightsError

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class FeatureWeights:
    """Frozen per-position weights, base-2 bits throughout.

    feature_order lists positions by descending gain_ratio; ties go to the
    lower position index (closer to the target).
    """

    gain_ratio: tuple[float, ...]
    info_gain: tuple[float, ...]
    split_info: tuple[float, ...]
    class_entropy: float

    @property
    def arity(self) -> int:
        return len(self.gain_ratio)

    @property
    def feature_order(self) -> tuple[int, ...]:
        return order_by_gain_ratio(self.gain_ratio)


def order_by_gain_ratio(gain_ratio) -> tuple[int, ...]:
    return tuple(sorted(range(len(gain_ratio)), key=lambda p: (-gain_ratio[p], p)))


class ContingencyTable:
    """Sufficient statistics: per-position value counts and value/class joint counts."""

    __slots__ = ("arity", "total", "class_counts", "value_counts", "joint_counts")

    def __init__(self, arity: int):
        self.arity = arity
        self.total = 0
        self.class_counts: dict[int, int] = {}
        # per position: value -> count, and value -> {class -> count}
        self.value_counts: list[dict[int, int]] = [{} for _ in range(arity)]
        self.joint_counts: list[dict[int, dict[int, int]]] = [{} for _ in range(arity)]


def accumulate(table: ContingencyTable, inst: Instance) -> ContingencyTable:
    """Fold one instance into the table (mutates and returns it)."""
    context = inst.context
    n = table.arity
    if len(context) != n:
        raise ValueError(f"instance arity {len(context)} != table arity {n}")
    target = inst.target
    table.total += 1
    cc = table.class_counts
    cc[target] = cc.get(target, 0) + 1
    for p in range(n):
        v = context[n - 1 - p]
        vc = table.value_counts[p]
        vc[v] = vc.get(v, 0) + 1
        jc = table.joint_counts[p]
        per_value = jc.get(v)
        if per_value is None:
            per_value = jc[v] = {}
        per_value[target] = per_value.get(target, 0) + 1
    return table


def entropy(counts) -> float:
    """Shannon entropy in bits of a class->count map (zero counts contribute 0)."""
    values = counts.values() if hasattr(counts, "values") else counts
    total = 0
    for c in values:
        total += c
    if total <= 0:
        raise UndefinedEntropyError("entropy of an empty or zero-total distribution")
    h = 0.0
    for c in values:
        if c:
            p = c / total
            h -= p * math.log(p)
    return h / LOG2


def finalize_weights(table: ContingencyTable) -> FeatureWeights:
    """Turn accumulated counts into frozen per-position weights.

    info_gain[p] = H(C) - sum_v P(v) H(C|v); split_info[p] is the entropy of
    the position's value distribution; gain_ratio is their quotient with the
    0/0 -> 0 convention for single-valued positions. Tiny negative gains from
    float cancellation are clamped to zero.
    """
    if table.total <= 0:
        raise UndefinedWeightsError("weights over zero instances")
    total = table.total
    h_class = entropy(table.class_counts)
    info_gain = []
    split_info = []
    gain_ratio = []
    for p in range(table.arity):
        cond = 0.0
        for v, vc in table.value_counts[p].items():
            cond += (vc / total) * entropy(table.joint_counts[p][v])
        ig = h_class - cond
        if ig < 0.0:
            ig = 0.0
        si = entropy(table.value_counts[p])
        info_gain.append(ig)
        split_info.append(si)
        gain_ratio.append(ig / si if si > 0.0 else 0.0)
    return FeatureWeights(
        gain_ratio=tuple(gain_ratio),
        info_gain=tuple(info_gain),
        split_info=tuple(split_info),
        class_entropy=h_class,
    )


def compute_weights(instances, n: int) -> FeatureWeights:
    """One-pass convenience: accumulate every instance, then finalize."""
    table = ContingencyTable(n)
    for inst in instances:
        accumulate(table, inst)
    return finalize_weights(table)


def dump_weights(weights: FeatureWeights, fh) -> None:
    """Debug dump: position (1 = token just before the target), then the three weights."""
    fh.write("position\tinfo_gain\tsplit_info\tgain_ratio\n")
    for p in range(weights.arity):
        fh.write(
            f"{p + 1}\t{weights.info_gain[p]:.12g}\t{weights.split_info[p]:.12g}"
            f"\t{weights.gain_ratio[p]:.12g}\n"
        )
