"""Exception hierarchy shared by all mtlm modules.

Grouped so the CLI can map each class of failure to a distinct exit code:
malformed input, incompatible/corrupt model files, and everything else.
"""


class MtlmError(Exception):
    """Base class for all errors raised by this package."""


class MalformedVocabularyError(MtlmError):
    """Vocabulary file violates the one-unique-token-per-line contract."""


class UnknownTokenError(MtlmError):
    """Corpus token not resolvable against the vocabulary."""

    def __init__(self, token, line, column):
        self.token = token
        self.line = line
        self.column = column
        super().__init__(f"unknown token {token!r} at line {line}, token {column}")


class MalformedCorpusError(MtlmError):
    """Corpus line cannot be parsed (bad integer in id-mode, boundary token in text, ...)."""


class EmptyStreamError(MtlmError):
    """An operation that needs at least one instance got an empty stream."""


class UndefinedEntropyError(MtlmError):
    """Entropy requested over an empty or zero-total count map."""


class UndefinedWeightsError(MtlmError):
    """Feature weights requested from a contingency table with zero instances."""


class UnsupportedOperationError(MtlmError):
    """Operation not valid for this model state (e.g. inserting into a pruned trie)."""


class IncompatibleModelError(MtlmError):
    """Model file has the wrong magic/version, or models cannot be combined."""


class CorruptModelError(MtlmError):
    """Model file is truncated or structurally inconsistent."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class NoNeighborsError(MtlmError):
    """Classification against a model that stores no instances."""


class EmptyDistributionError(MtlmError):
    """Normalization or prediction resolution over an empty distribution."""


class UndefinedPerplexityError(MtlmError):
    """Perplexity requested but no evaluation target received non-zero probability."""


class UnderdeterminedFitError(MtlmError):
    """Log-linear fit needs at least two points with distinct sizes."""
