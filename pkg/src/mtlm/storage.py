"""Binary model files: bit-exact save/load of a trained Model.

Layout (little-endian throughout):

  header: magic "MTLM", format version u32, algorithm u8, context width u8,
          pruned u8, reserved u8, instance count u64, vocab size u32,
          weight arrays (n f64 gain ratios, n f64 info gains, n f64 split
          infos), 32-byte corpus digest.
  vocab:  per entry, u32 byte length + UTF-8 text, in token-ID order.
  trie:   pre-order node records: value u32 (root uses sentinel 0xFFFFFFFF),
          child count u32, distribution entry count u32, then
          (token u32, count u64) pairs in ascending token order, then the
          child records recursively in ascending child-value order.

A wrong magic or version raises IncompatibleModelError; truncation or
structural inconsistency raises CorruptModelError carrying the byte offset.
"""

from __future__ import annotations

import hashlib
import struct
from itertools import chain

from .corpus import BOUNDARY_TEXT, Vocabulary
from .errors import CorruptModelError, IncompatibleModelError
from .trie import Model, TrieNode
from .weights import FeatureWeights, entropy

MAGIC = b"MTLM"
FORMAT_VERSION = 1
ROOT_SENTINEL = 0xFFFFFFFF

_ALGO_CODES = {"ib1": 1, "tribl2": 2, "igtree": 3}
_CODE_ALGOS = {v: k for k, v in _ALGO_CODES.items()}

_FIXED_HEADER = struct.Struct("<4sIBBBBQI")
_NODE_HEADER = struct.Struct("<III")


def file_digest(path) -> bytes:
    """SHA-256 of a file's bytes (the corpus digest for a fresh training run)."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.digest()


def chain_digest(previous: bytes, corpus_hash: bytes) -> bytes:
    """Digest after checkpoint continuation: hash of the old digest plus the
    new corpus hash, so the training lineage stays auditable."""
    return hashlib.sha256(previous + corpus_hash).digest()


def save_model(model: Model, path) -> None:
    digest = bytes.fromhex(model.metadata.get("corpus_digest", "00" * 32))
    if len(digest) != 32:
        raise ValueError("corpus digest must be 32 bytes")
    n = model.context_width
    w = model.weights
    with open(path, "wb", buffering=1 << 20) as fh:
        fh.write(
            _FIXED_HEADER.pack(
                MAGIC,
                FORMAT_VERSION,
                _ALGO_CODES[model.algorithm],
                n,
                1 if model.pruned else 0,
                0,
                model.instance_count,
                model.vocab.size,
            )
        )
        fh.write(struct.pack(f"<{3 * n}d", *w.gain_ratio, *w.info_gain, *w.split_info))
        fh.write(digest)
        for text in model.vocab.entries:
            raw = text.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        stack = [model.root]
        while stack:
            node = stack.pop()
            children = node.sorted_children()
            items = sorted(node.counts.items())
            value = ROOT_SENTINEL if node.value is None else node.value
            fh.write(_NODE_HEADER.pack(value, len(children), len(items)))
            if items:
                fh.write(struct.pack(f"<{'IQ' * len(items)}", *chain.from_iterable(items)))
            stack.extend(reversed(children))


class _Reader:
    """Cursor over the model bytes; every read checks for truncation."""

    __slots__ = ("data", "offset")

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise CorruptModelError("model file truncated", offset=self.offset)
        out = self.data[self.offset : end]
        self.offset = end
        return out

    def unpack(self, st: struct.Struct):
        end = self.offset + st.size
        if end > len(self.data):
            raise CorruptModelError("model file truncated", offset=self.offset)
        out = st.unpack_from(self.data, self.offset)
        self.offset = end
        return out


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    magic, version, algo_code, n, pruned_flag, _reserved, instance_count, vocab_size = r.unpack(
        _FIXED_HEADER
    )
    if magic != MAGIC:
        raise IncompatibleModelError(f"not a model file (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise IncompatibleModelError(f"unsupported format version {version}")
    algorithm = _CODE_ALGOS.get(algo_code)
    if algorithm is None:
        raise IncompatibleModelError(f"unknown algorithm code {algo_code}")
    if n < 1:
        raise CorruptModelError(f"invalid context width {n}", offset=0)
    if pruned_flag and algorithm != "igtree":
        raise CorruptModelError("pruned flag set on a non-igtree model", offset=0)
    w = struct.unpack_from(f"<{3 * n}d", r.take(3 * n * 8))
    digest = r.take(32)

    entries = []
    len_u32 = struct.Struct("<I")
    for _ in range(vocab_size):
        (size,) = r.unpack(len_u32)
        raw = r.take(size)
        try:
            entries.append(raw.decode("utf-8"))
        except UnicodeDecodeError:
            raise CorruptModelError("undecodable vocab entry", offset=r.offset - size) from None
    if BOUNDARY_TEXT not in entries:
        raise CorruptModelError("vocabulary lacks the boundary entry", offset=r.offset)
    vocab = Vocabulary.from_entries(entries)
    if vocab.size != vocab_size:
        raise CorruptModelError("vocabulary size mismatch", offset=r.offset)

    root = _read_trie(r, n, vocab_size)
    if r.offset != len(data):
        raise CorruptModelError("trailing bytes after trie block", offset=r.offset)
    if root.total != instance_count:
        raise CorruptModelError(
            f"root distribution total {root.total} != instance count {instance_count}",
            offset=r.offset,
        )

    weights = FeatureWeights(
        gain_ratio=tuple(w[:n]),
        info_gain=tuple(w[n : 2 * n]),
        split_info=tuple(w[2 * n :]),
        class_entropy=entropy(root.counts) if root.total else 0.0,
    )
    return Model(
        algorithm=algorithm,
        context_width=n,
        weights=weights,
        vocab=vocab,
        root=root,
        pruned=bool(pruned_flag),
        instance_count=instance_count,
        metadata={"corpus_digest": digest.hex()},
    )


def _read_node(r: _Reader, vocab_size: int, is_root: bool):
    start = r.offset
    value, child_count, dist_count = r.unpack(_NODE_HEADER)
    if is_root:
        if value != ROOT_SENTINEL:
            raise CorruptModelError("root record lacks the sentinel value", offset=start)
        value = None
    elif value >= vocab_size:
        raise CorruptModelError(f"node value {value} outside vocabulary", offset=start)
    if dist_count:
        flat = struct.unpack_from(f"<{'IQ' * dist_count}", r.take(12 * dist_count))
        tokens = flat[0::2]
        counts = flat[1::2]
        if any(t >= vocab_size for t in tokens):
            raise CorruptModelError("distribution token outside vocabulary", offset=start)
        if any(c == 0 for c in counts):
            raise CorruptModelError("zero-count distribution entry", offset=start)
        dist = dict(zip(tokens, counts))
        if len(dist) != dist_count:
            raise CorruptModelError("duplicate distribution tokens", offset=start)
    else:
        dist = {}
    return value, child_count, dist


def _read_trie(r: _Reader, n: int, vocab_size: int) -> TrieNode:
    value, child_count, dist = _read_node(r, vocab_size, is_root=True)
    root = TrieNode(None, 0)
    root.counts = dist
    root.total = sum(dist.values())
    # stack of [parent node, children still to read]
    stack: list[list] = [[root, child_count]]
    while stack:
        top = stack[-1]
        if top[1] == 0:
            stack.pop()
            continue
        top[1] -= 1
        parent: TrieNode = top[0]
        start = r.offset
        value, child_count, dist = _read_node(r, vocab_size, is_root=False)
        if parent.depth + 1 > n:
            raise CorruptModelError("trie deeper than the context width", offset=start)
        node = TrieNode(value, parent.depth + 1)
        node.counts = dist
        node.total = sum(dist.values())
        if parent.children is None:
            parent.children = {}
        if value in parent.children:
            raise CorruptModelError(f"duplicate child value {value}", offset=start)
        parent.children[value] = node
        if child_count:
            stack.append([node, child_count])
    return root
