"""Autoregressive generation: repeated next-token classification over a
sliding context window.

Prompts shorter than the context width are left-padded with the boundary
token, mirroring training-time windowing, so prompt-initial behavior matches
document-initial behavior. Sampling draws from one seeded MT19937 stream
(Python's random.Random) per call via inverse-CDF over the candidate tokens
in ascending token-ID order; sequences are reproducible for a fixed seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .classify import DETERMINISTIC, classify, normalize, resolve_prediction
from .errors import NoNeighborsError
from .trie import ClassDistribution, Model


@dataclass
class GenerationConfig:
    """Decoding settings.

    mode "greedy" resolves deterministically; "sample" draws from the
    normalized distribution; "top_k" keeps the top_k highest-count entries
    (ties broken toward the lower token ID) before normalizing and drawing.
    max_tokens of 0 is allowed and yields an empty continuation. If the
    resolved token equals stop_token, generation halts without emitting it.
    """

    mode: str = "greedy"
    max_tokens: int = 50
    seed: int | None = None
    stop_token: int | None = None
    normalization: str = "proportional"
    temperature: float = 1.0
    top_k: int | None = None

    def __post_init__(self):
        if self.mode not in ("greedy", "sample", "top_k"):
            raise ValueError(f"unknown generation mode {self.mode!r}")
        if self.max_tokens < 0:
            raise ValueError("max_tokens must be >= 0")
        if self.mode in ("sample", "top_k") and self.seed is None:
            raise ValueError(f"{self.mode} mode requires a seed")
        if self.mode == "top_k" and (self.top_k is None or self.top_k < 1):
            raise ValueError("top_k mode requires top_k >= 1")


def sample_token(probs: dict[int, float], rng: random.Random) -> int:
    """Inverse-CDF draw over a token->probability map (ascending token-ID order)."""
    u = rng.random()
    acc = 0.0
    last = None
    for t in sorted(probs):
        acc += probs[t]
        last = t
        if u < acc:
            return t
    return last


def _restrict_top_k(dist: ClassDistribution, k: int) -> ClassDistribution:
    if len(dist.counts) <= k:
        return dist
    kept = sorted(dist.counts.items(), key=lambda tc: (-tc[1], tc[0]))[:k]
    return ClassDistribution(dict(kept))


def generate(model: Model, prompt, cfg: GenerationConfig, k: int = 1) -> list[int]:
    """Generate up to cfg.max_tokens continuation tokens after the prompt."""
    n = model.context_width
    boundary = model.vocab.boundary_id
    window = list(prompt)[-n:]
    window = [boundary] * (n - len(window)) + window
    rng = random.Random(cfg.seed) if cfg.mode in ("sample", "top_k") else None
    root_counts = model.root.counts
    out: list[int] = []
    for step in range(cfg.max_tokens):
        try:
            result = classify(model, window, k)
        except NoNeighborsError as err:
            raise NoNeighborsError(f"{err} (at generation step {step})") from err
        dist = result.distribution
        if cfg.mode == "greedy":
            tok = resolve_prediction(dist, DETERMINISTIC, root_counts)
        else:
            if cfg.mode == "top_k":
                dist = _restrict_top_k(dist, cfg.top_k)
            probs = normalize(dist, cfg.normalization, cfg.temperature)
            tok = sample_token(probs, rng)
        if cfg.stop_token is not None and tok == cfg.stop_token:
            break
        out.append(tok)
        window = window[1:] + [tok]
    return out
