"""Learnable parameters: per-word mixture means, log-variances, and weight
scores for input and output embedding banks, plus Adagrad accumulators,
initialization, and binary persistence.

Variances are stored in the log domain (so they stay positive without
projection) and mixture weights as unconstrained scores mapped through a
softmax.
"""

from __future__ import annotations

import enum
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .corpus import Vocabulary
from .errors import ConfigError, ModelFormatError

__all__ = [
    "CovarianceKind",
    "TrainConfig",
    "WordMixture",
    "Bank",
    "ParameterStore",
    "init_store",
    "save_model",
    "load_model",
    "softmax",
]

MAGIC = b"W2GM"
VERSION_PARAMS = 1  # parameters only
VERSION_WITH_OPTIMIZER = 2  # parameters + Adagrad accumulators (checkpoints)

_COV_CODES = {0: "spherical", 1: "diagonal"}


class CovarianceKind(enum.Enum):
    """Shape of the per-component covariance: one scalar or one value per
    dimension."""

    SPHERICAL = "spherical"
    DIAGONAL = "diagonal"

    def var_dim(self, dim: int) -> int:
        return 1 if self is CovarianceKind.SPHERICAL else dim

    @property
    def code(self) -> int:
        return 0 if self is CovarianceKind.SPHERICAL else 1


@dataclass
class TrainConfig:
    """All training hyperparameters.

    Defaults follow the reference large-corpus setup; desk-scale runs
    typically override dim, min_count, and epochs. subsample_t = 0 disables
    frequent-word subsampling entirely.
    """

    dim: int = 50
    k: int = 2
    window: int = 10
    margin: float = 1.0
    batch_size: int = 128
    lr_start: float = 0.05
    lr_end: float = 1e-5
    subsample_t: float = 1e-5
    min_count: int = 100
    epsilon: float = 1e-4
    init_var: float = 0.05
    epochs: int = 1
    cov: CovarianceKind = CovarianceKind.SPHERICAL
    workers: int = 1
    seed: int = 1

    def validate(self) -> "TrainConfig":
        positive = {
            "dim": self.dim,
            "k": self.k,
            "window": self.window,
            "margin": self.margin,
            "batch_size": self.batch_size,
            "min_count": self.min_count,
            "epsilon": self.epsilon,
            "init_var": self.init_var,
            "epochs": self.epochs,
            "workers": self.workers,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        # lr = 0 is allowed: it freezes the parameters (useful for dry runs)
        if self.lr_start < 0 or self.lr_end < 0:
            raise ConfigError(
                f"learning rates must be >= 0, got {self.lr_start}..{self.lr_end}"
            )
        if self.subsample_t < 0:
            raise ConfigError(
                f"subsample_t must be >= 0 (0 disables), got {self.subsample_t}"
            )
        if self.lr_end > self.lr_start:
            raise ConfigError(
                f"lr_end ({self.lr_end}) must not exceed lr_start ({self.lr_start})"
            )
        return self


def softmax(scores: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    shifted = scores - np.max(scores, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class WordMixture:
    """One word's Gaussian mixture: K means, K log-variance records, and K
    unconstrained weight scores.

    log_vars has shape (K, 1) for spherical covariances and (K, D) for
    diagonal ones. Arrays may be views into a ParameterStore.
    """

    means: np.ndarray
    log_vars: np.ndarray
    scores: np.ndarray

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def weights(self) -> np.ndarray:
        """Mixture probabilities p_i = softmax(scores); always sum to 1."""
        return softmax(self.scores.astype(np.float64))

    @property
    def variances(self) -> np.ndarray:
        """Component variances exp(log_vars); positive by construction."""
        return np.exp(self.log_vars.astype(np.float64))


@dataclass
class Bank:
    """One embedding bank (or the matching Adagrad accumulators)."""

    means: np.ndarray  # (V, K, D) float32
    log_vars: np.ndarray  # (V, K, 1 or D) float32
    scores: np.ndarray  # (V, K) float32

    @classmethod
    def zeros(cls, v: int, k: int, dim: int, var_dim: int) -> "Bank":
        return cls(
            means=np.zeros((v, k, dim), dtype=np.float32),
            log_vars=np.zeros((v, k, var_dim), dtype=np.float32),
            scores=np.zeros((v, k), dtype=np.float32),
        )

    def mixture(self, word_id: int) -> WordMixture:
        """Zero-copy view of one word's parameters."""
        return WordMixture(
            means=self.means[word_id],
            log_vars=self.log_vars[word_id],
            scores=self.scores[word_id],
        )


@dataclass
class ParameterStore:
    """Input and output embedding banks plus per-parameter Adagrad
    accumulators. The trained input bank is the final word representation;
    both banks are persisted.

    Training workers may update the arrays concurrently without locks;
    correctness there is stochastic convergence, not serializability. All
    evaluation-time access is read-only.
    """

    input_bank: Bank
    output_bank: Bank
    input_acc: Bank
    output_acc: Bank
    cov: CovarianceKind

    @property
    def vocab_size(self) -> int:
        return self.input_bank.means.shape[0]

    @property
    def k(self) -> int:
        return self.input_bank.means.shape[1]

    @property
    def dim(self) -> int:
        return self.input_bank.means.shape[2]

    def input_mixture(self, word_id: int) -> WordMixture:
        return self.input_bank.mixture(word_id)

    def output_mixture(self, word_id: int) -> WordMixture:
        return self.output_bank.mixture(word_id)


def init_store(v: int, config: TrainConfig, rng: np.random.Generator) -> ParameterStore:
    """Fresh parameters: mean coordinates ~ Uniform[-sqrt(3/D), sqrt(3/D)]
    (unit expected variance of the mean vector), every variance = init_var,
    every score = 0 (equal component weights), accumulators zeroed.

    The input bank is drawn before the output bank, so a fixed rng seed gives
    a reproducible store.
    """
    if v < 1:
        raise ConfigError(f"vocabulary size must be >= 1, got {v}")
    config.validate()
    k, dim = config.k, config.dim
    var_dim = config.cov.var_dim(dim)
    bound = math.sqrt(3.0 / dim)
    log_v = math.log(config.init_var)

    def fresh_bank() -> Bank:
        bank = Bank.zeros(v, k, dim, var_dim)
        bank.means[...] = rng.uniform(-bound, bound, size=(v, k, dim))
        bank.log_vars[...] = log_v
        return bank

    return ParameterStore(
        input_bank=fresh_bank(),
        output_bank=fresh_bank(),
        input_acc=Bank.zeros(v, k, dim, var_dim),
        output_acc=Bank.zeros(v, k, dim, var_dim),
        cov=config.cov,
    )


def _bank_payload(bank: Bank) -> bytes:
    """Interleaved per-word, per-component layout: score, D means, then the
    log-variance record, all little-endian f32."""
    v, k, _ = bank.means.shape
    rows = np.concatenate(
        [bank.scores.reshape(v, k, 1), bank.means, bank.log_vars], axis=2
    )
    return np.ascontiguousarray(rows, dtype="<f4").tobytes()


def _parse_bank(
    buf: bytes, offset: int, v: int, k: int, dim: int, var_dim: int, what: str
) -> tuple[Bank, int]:
    rec = 1 + dim + var_dim
    nbytes = v * k * rec * 4
    if offset + nbytes > len(buf):
        raise ModelFormatError(
            f"truncated payload: need {nbytes} bytes for {what}", offset=offset
        )
    rows = np.frombuffer(buf, dtype="<f4", count=v * k * rec, offset=offset)
    rows = rows.reshape(v, k, rec)
    bank = Bank(
        scores=rows[:, :, 0].astype(np.float32),
        means=rows[:, :, 1 : 1 + dim].astype(np.float32),
        log_vars=rows[:, :, 1 + dim :].astype(np.float32),
    )
    return bank, offset + nbytes


def save_model(
    store: ParameterStore,
    vocab: Vocabulary,
    path: str | os.PathLike,
    include_optimizer_state: bool = False,
) -> None:
    """Write the binary model file.

    Layout (little-endian): magic "W2GM"; u32 format version; u32 V, D, K,
    cov_kind (0=spherical, 1=diagonal); per word a u32 byte length + UTF-8
    token + u64 count; then the input and output banks, per word per
    component: weight score (f32), D mean f32s, and the 1-or-D log-variance
    f32s. Version 2 appends the Adagrad accumulators in the same bank layout
    (used for resumable checkpoints; final exports omit them).

    The stored weight field is the unconstrained softmax score, so that a
    save/load round trip reproduces every parameter bit-exactly.
    """
    if len(vocab) != store.vocab_size:
        raise ValueError(
            f"vocabulary size {len(vocab)} does not match store {store.vocab_size}"
        )
    version = VERSION_WITH_OPTIMIZER if include_optimizer_state else VERSION_PARAMS
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(
            struct.pack(
                "<5I", version, store.vocab_size, store.dim, store.k, store.cov.code
            )
        )
        for tok, count in zip(vocab.tokens, vocab.counts):
            raw = tok.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<Q", int(count)))
        fh.write(_bank_payload(store.input_bank))
        fh.write(_bank_payload(store.output_bank))
        if include_optimizer_state:
            fh.write(_bank_payload(store.input_acc))
            fh.write(_bank_payload(store.output_acc))


def load_model(
    path: str | os.PathLike,
) -> tuple[ParameterStore, Vocabulary, TrainConfig]:
    """Read a model file written by save_model.

    Returns the store, the vocabulary, and a TrainConfig whose model-shape
    fields (dim, k, cov) reflect the file; all other hyperparameters are the
    defaults, since the format does not carry them.
    """
    with open(path, "rb") as fh:
        buf = fh.read()

    offset = 0
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise ModelFormatError(
            f"bad magic: expected {MAGIC!r}, got {buf[:4]!r}", offset=0
        )
    offset = 4
    if offset + 20 > len(buf):
        raise ModelFormatError("truncated header: need 20 bytes", offset=offset)
    version, v, dim, k, cov_code = struct.unpack_from("<5I", buf, offset)
    offset += 20
    if version not in (VERSION_PARAMS, VERSION_WITH_OPTIMIZER):
        raise ModelFormatError(f"unsupported format version {version}", offset=4)
    if cov_code not in _COV_CODES:
        raise ModelFormatError(f"unknown covariance kind code {cov_code}", offset=20)
    if v < 1 or dim < 1 or k < 1:
        raise ModelFormatError(
            f"invalid shape header V={v} D={dim} K={k}", offset=8
        )
    cov = CovarianceKind(_COV_CODES[cov_code])
    var_dim = cov.var_dim(dim)

    tokens: list[str] = []
    counts = np.zeros(v, dtype=np.int64)
    for i in range(v):
        if offset + 4 > len(buf):
            raise ModelFormatError(
                f"truncated vocabulary: header promised {v} words, got {i}",
                offset=offset,
            )
        (tok_len,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        if offset + tok_len + 8 > len(buf):
            raise ModelFormatError(
                f"truncated vocabulary entry {i} (token length {tok_len})",
                offset=offset,
            )
        try:
            tokens.append(buf[offset : offset + tok_len].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise ModelFormatError(
                f"vocabulary entry {i} is not valid UTF-8: {exc}", offset=offset
            ) from None
        offset += tok_len
        (counts[i],) = struct.unpack_from("<Q", buf, offset)
        offset += 8

    input_bank, offset = _parse_bank(buf, offset, v, k, dim, var_dim, "input bank")
    output_bank, offset = _parse_bank(buf, offset, v, k, dim, var_dim, "output bank")
    if version == VERSION_WITH_OPTIMIZER:
        input_acc, offset = _parse_bank(
            buf, offset, v, k, dim, var_dim, "input accumulators"
        )
        output_acc, offset = _parse_bank(
            buf, offset, v, k, dim, var_dim, "output accumulators"
        )
    else:
        input_acc = Bank.zeros(v, k, dim, var_dim)
        output_acc = Bank.zeros(v, k, dim, var_dim)
    if offset != len(buf):
        raise ModelFormatError(
            f"unexpected {len(buf) - offset} trailing bytes", offset=offset
        )

    store = ParameterStore(
        input_bank=input_bank,
        output_bank=output_bank,
        input_acc=input_acc,
        output_acc=output_acc,
        cov=cov,
    )
    vocab = Vocabulary(tokens=tokens, counts=counts)
    config = TrainConfig(dim=dim, k=k, cov=cov)
    return store, vocab, config
