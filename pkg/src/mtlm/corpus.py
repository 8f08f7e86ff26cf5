"""Corpus ingestion: vocabulary files, pre-tokenized token streams, and
sliding-window extraction of fixed-width classification instances.

Corpora arrive pre-tokenized, one document per line, tokens separated by
single spaces. An id-mode variant holds base-10 unsigned token IDs instead
of token texts. Tokenization itself (BPE training, detokenization) is out
of scope; an external tokenizer owns the vocabulary.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

from .errors import MalformedCorpusError, MalformedVocabularyError, UnknownTokenError

# Reserved token text padding context windows at document starts. Appended to
# vocabularies that do not already carry it; must never occur in corpus text.
BOUNDARY_TEXT = "<|boundary|>"


@dataclass
class Vocabulary:
    """Dense token-ID space: entries[id] = text, index[text] = id."""

    entries: list[str]
    index: dict[str, int]
    boundary_id: int

    @property
    def size(self) -> int:
        return len(self.entries)

    def id_of(self, text: str) -> int | None:
        return self.index.get(text)

    def text_of(self, token_id: int) -> str:
        return self.entries[token_id]

    @classmethod
    def from_entries(cls, entries: Iterable[str]) -> "Vocabulary":
        """Build a vocabulary from token texts, appending the boundary entry if absent."""
        entries = list(entries)
        index: dict[str, int] = {}
        for i, text in enumerate(entries):
            if text in index:
                raise MalformedVocabularyError(
                    f"duplicate token {text!r} at lines {index[text] + 1} and {i + 1}"
                )
            index[text] = i
        if BOUNDARY_TEXT in index:
            boundary_id = index[BOUNDARY_TEXT]
        else:
            boundary_id = len(entries)
            entries.append(BOUNDARY_TEXT)
            index[BOUNDARY_TEXT] = boundary_id
        return cls(entries=entries, index=index, boundary_id=boundary_id)


@dataclass
class TokenStream:
    """Sequence of token-ID documents, one per corpus line."""

    documents: list[Sequence[int]] = field(default_factory=list)

    @property
    def token_count(self) -> int:
        return sum(len(d) for d in self.documents)


class Instance(NamedTuple):
    """Fixed-width training/evaluation example.

    context holds n token IDs in document order [w-n ... w-1]; target is w0.
    """

    context: tuple[int, ...]
    target: int


def load_vocabulary(path) -> Vocabulary:
    """Read a vocabulary file: UTF-8, one token text per line, line index = ID.

    Files may already carry the boundary entry; otherwise it is appended as
    the final entry. Blank lines are not valid token texts and are rejected.
    """
    with open(path, "r", encoding="utf-8") as fh:
        entries = [line.rstrip("\n") for line in fh]
    for i, text in enumerate(entries):
        if text == "":
            raise MalformedVocabularyError(f"empty token text at line {i + 1}")
    return Vocabulary.from_entries(entries)


def load_token_stream(path, vocab: Vocabulary, id_mode: bool = False) -> TokenStream:
    """Read a corpus file into a TokenStream against the given vocabulary.

    Each line is one document of whitespace-separated token texts (or
    unsigned integer IDs when id_mode is set). Empty lines become empty
    documents, which windowing later skips. Unknown tokens raise
    UnknownTokenError naming the 1-based line and token position.
    """
    with open(path, "r", encoding="utf-8") as fh:
        return parse_token_stream(fh, vocab, id_mode=id_mode)


def parse_token_stream(fh: io.TextIOBase, vocab: Vocabulary, id_mode: bool = False) -> TokenStream:
    documents: list[Sequence[int]] = []
    index = vocab.index
    size = vocab.size
    boundary = vocab.boundary_id
    # Documents hold the canonical int objects from the vocabulary index so
    # the trie's dict keys all share them (large builds stay compact).
    canonical = [index[t] for t in vocab.entries] if id_mode else None
    for lineno, line in enumerate(fh, start=1):
        tokens = line.split()
        doc: list[int] = []
        for col, tok in enumerate(tokens, start=1):
            if id_mode:
                try:
                    tid = int(tok, 10)
                except ValueError:
                    raise MalformedCorpusError(
                        f"non-integer token {tok!r} at line {lineno}, token {col} (id-mode)"
                    ) from None
                if tid < 0 or tid >= size:
                    raise UnknownTokenError(tok, lineno, col)
                tid = canonical[tid]
            else:
                tid = index.get(tok)
                if tid is None:
                    raise UnknownTokenError(tok, lineno, col)
            if tid == boundary:
                raise MalformedCorpusError(
                    f"reserved boundary token at line {lineno}, token {col}"
                )
            doc.append(tid)
        documents.append(doc)
    return TokenStream(documents=documents)


def window_instances(stream: TokenStream, n: int, boundary_id: int) -> Iterator[Instance]:
    """Slide a width-n window over every document, yielding one instance per token.

    Instance i of a document t1..tm has target ti and context
    [t(i-n) .. t(i-1)], with positions before the document start filled by
    the boundary ID. Document boundaries are never crossed.
    """
    if n < 1:
        raise ValueError("context width must be >= 1")
    pad = (boundary_id,) * n
    for doc in stream.documents:
        if not doc:
            continue
        window = pad
        for target in doc:
            yield Instance(window, target)
            window = window[1:] + (target,)


def dump_instances(instances: Iterable[Instance], fh: io.TextIOBase) -> int:
    """Write instances one per line: n context IDs then the target, space-separated."""
    count = 0
    for inst in instances:
        fh.write(" ".join(map(str, inst.context)))
        fh.write(f" {inst.target}\n")
        count += 1
    return count
