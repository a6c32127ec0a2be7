"""Corpus handling: vocabulary, frequent-word subsampling, negative sampling,
and the (center, positive, negative) training-triple stream.

A corpus is a plain UTF-8 text file. Tokens are separated by ASCII whitespace
and a newline terminates a sentence. No lowercasing or other normalization is
applied.
"""

from __future__ import annotations

import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterator, NamedTuple

import numpy as np

from .errors import ConfigError

__all__ = [
    "Vocabulary",
    "NegativeSampler",
    "TrainingTriple",
    "build_vocab",
    "subsample_discard_prob",
    "sample_negative",
    "stream_triples",
    "shard_byte_ranges",
]


class TrainingTriple(NamedTuple):
    """One training sample: center word, positive context, negative context."""

    center: int
    positive: int
    negative: int


@dataclass
class Vocabulary:
    """Token <-> dense-id map with raw corpus counts.

    Ids are dense in [0, V), ordered by descending count (token string breaks
    ties) so id assignment is deterministic for a given corpus.

    Attributes:
        tokens: token string for each id.
        counts: raw corpus occurrence count for each id.
        total_tokens: sum of retained counts.
        token_to_id: inverse map of tokens.
    """

    tokens: list[str]
    counts: np.ndarray
    total_tokens: int = field(init=False)
    token_to_id: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.total_tokens = int(self.counts.sum())
        self.token_to_id = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def frequencies(self) -> np.ndarray:
        """Relative frequency f(w) = count(w) / total retained tokens."""
        return self.counts / float(self.total_tokens)

    def write_dump(self, out: IO[str]) -> None:
        """Write one `token<TAB>count` line per word, ordered by id."""
        for tok, count in zip(self.tokens, self.counts):
            out.write(f"{tok}\t{int(count)}\n")


def build_vocab(corpus_path: str | os.PathLike, min_count: int) -> Vocabulary:
    """Count tokens in the corpus and keep those with count >= min_count.

    Counts reflect the raw corpus; filtering only selects which tokens are
    retained. Raises OSError if the corpus is unreadable and ConfigError if
    nothing survives the min_count filter.
    """
    if min_count < 1:
        raise ConfigError(f"min_count must be >= 1, got {min_count}")
    counter: Counter[bytes] = Counter()
    with open(corpus_path, "rb") as fh:
        for line in fh:
            counter.update(line.split())
    kept = [(tok.decode("utf-8"), n) for tok, n in counter.items() if n >= min_count]
    if not kept:
        raise ConfigError(
            f"no token occurs at least {min_count} times in {corpus_path}"
        )
    kept.sort(key=lambda item: (-item[1], item[0]))
    tokens = [tok for tok, _ in kept]
    counts = np.array([n for _, n in kept], dtype=np.int64)
    return Vocabulary(tokens=tokens, counts=counts)


def subsample_discard_prob(frequency: float, t: float) -> float:
    """Probability of discarding an occurrence of a word with relative
    frequency `frequency`, given threshold `t`: max(0, 1 - sqrt(t/frequency)).
    """
    if frequency <= 0:
        raise ValueError(f"frequency must be positive, got {frequency}")
    if t <= 0:
        raise ValueError(f"subsample threshold must be positive, got {t}")
    return max(0.0, 1.0 - math.sqrt(t / frequency))


class NegativeSampler:
    """Samples word ids from the distorted unigram distribution count^{3/4}.

    Draws use binary search over cumulative weights, so probabilities are
    exact; P(id = i) = counts[i]^{3/4} / sum_j counts[j]^{3/4}.
    """

    DISTORTION = 0.75

    def __init__(self, vocab: Vocabulary):
        if len(vocab) == 0:
            raise ConfigError("cannot build a sampler from an empty vocabulary")
        weights = np.power(vocab.counts.astype(np.float64), self.DISTORTION)
        self.cumulative_weights = np.cumsum(weights)
        self.total_weight = float(self.cumulative_weights[-1])

    def sample(self, rng: np.random.Generator) -> int:
        """Draw a single word id."""
        u = rng.random() * self.total_weight
        return int(np.searchsorted(self.cumulative_weights, u, side="right"))

    def sample_batch(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw `n` word ids at once. Same distribution as sample()."""
        u = rng.random(n) * self.total_weight
        return np.searchsorted(self.cumulative_weights, u, side="right")


def sample_negative(sampler: NegativeSampler, rng: np.random.Generator) -> int:
    """Draw one negative-context word id from the distorted unigram."""
    return sampler.sample(rng)


def discard_probs(vocab: Vocabulary, t: float) -> np.ndarray:
    """Per-id discard probability max(0, 1 - sqrt(t/f)) for threshold t."""
    freqs = vocab.frequencies()
    return np.maximum(0.0, 1.0 - np.sqrt(t / freqs))


def shard_byte_ranges(corpus_path: str | os.PathLike, n: int) -> list[tuple[int, int]]:
    """Split a corpus file into `n` byte ranges aligned to line starts.

    A line belongs to the range containing its first byte, so the ranges
    partition the sentences exactly. Ranges may be empty for tiny files.
    """
    size = os.path.getsize(corpus_path)
    if n <= 1 or size == 0:
        return [(0, size)]
    cuts = [0]
    with open(corpus_path, "rb") as fh:
        for k in range(1, n):
            pos = size * k // n
            if pos <= cuts[-1]:
                cuts.append(cuts[-1])
                continue
            fh.seek(pos)
            fh.readline()  # advance to the next line start
            cuts.append(min(fh.tell(), size))
    cuts.append(size)
    return [(cuts[i], cuts[i + 1]) for i in range(n)]


def _iter_sentence_ids(
    corpus_path: str | os.PathLike,
    vocab: Vocabulary,
    byte_range: tuple[int, int] | None = None,
) -> Iterator[np.ndarray]:
    """Yield per-sentence arrays of in-vocabulary word ids.

    Out-of-vocabulary tokens are dropped silently (they were filtered at
    vocabulary-build time). Empty sentences are skipped.
    """
    # bytes-keyed lookup avoids decoding every corpus token
    byte_ids = {tok.encode("utf-8"): i for tok, i in vocab.token_to_id.items()}
    with open(corpus_path, "rb") as fh:
        if byte_range is None:
            start, end = 0, os.path.getsize(corpus_path)
        else:
            start, end = byte_range
        fh.seek(start)
        while fh.tell() < end:
            line = fh.readline()
            if not line:
                break
            ids = [byte_ids[tok] for tok in line.split() if tok in byte_ids]
            if ids:
                yield np.array(ids, dtype=np.int64)


def _window_pairs(ids: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """All (center, context) pairs within `window` positions, in center-major
    order: center position ascending, context position ascending within it.
    """
    n = len(ids)
    if n < 2:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    offsets = np.concatenate([np.arange(-window, 0), np.arange(1, window + 1)])
    pos = np.arange(n)[:, None] + offsets[None, :]  # (n, 2*window)
    valid = (pos >= 0) & (pos < n)
    centers = np.broadcast_to(np.arange(n)[:, None], pos.shape)[valid]
    contexts = pos[valid]
    return ids[centers], ids[contexts]


def sentence_triple_arrays(
    corpus_path: str | os.PathLike,
    vocab: Vocabulary,
    sampler: NegativeSampler,
    window: int,
    t: float | None,
    rng: np.random.Generator,
    byte_range: tuple[int, int] | None = None,
) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Yield (centers, positives, negatives) id arrays, one tuple per sentence.

    Subsampling (threshold `t`; None disables it) removes words from the
    sentence before windowing, so a discarded word is neither a center nor a
    context. Each surviving (center, context) pair gets one fresh negative.
    """
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    discard = discard_probs(vocab, t) if t is not None else None
    for ids in _iter_sentence_ids(corpus_path, vocab, byte_range):
        if discard is not None:
            keep = rng.random(len(ids)) >= discard[ids]
            ids = ids[keep]
        centers, positives = _window_pairs(ids, window)
        if len(centers) == 0:
            continue
        negatives = sampler.sample_batch(rng, len(centers))
        yield centers, positives, negatives


def stream_triples(
    corpus_path: str | os.PathLike,
    vocab: Vocabulary,
    sampler: NegativeSampler,
    window: int,
    t: float | None,
    rng: np.random.Generator,
    byte_range: tuple[int, int] | None = None,
) -> Iterator[TrainingTriple]:
    """Stream subsampled TrainingTriples from the corpus.

    For each retained center word at sentence position i, one triple is
    emitted per retained context word at positions i-window..i+window
    (excluding i, clipped at sentence bounds), paired with one freshly
    sampled negative context word.
    """
    for centers, positives, negatives in sentence_triple_arrays(
        corpus_path, vocab, sampler, window, t, rng, byte_range
    ):
        for c, p, n in zip(centers, positives, negatives):
            yield TrainingTriple(int(c), int(p), int(n))
