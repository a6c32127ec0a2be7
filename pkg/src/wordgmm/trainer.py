"""Max-margin training: hinge loss over log energies, analytic gradients for
every parameter, Adagrad updates on a linearly decaying learning rate, and
the (optionally multi-worker) training loop.

The per-triple functions (hinge_loss, loss_gradient, adagrad_step) are the
reference surface; the training loop runs the same math vectorized over
whole batches. Gradients are taken with respect to the reparameterized
quantities actually optimized: means, log-variances, and mixture scores.
"""

from __future__ import annotations

import sys
import threading
from dataclasses import dataclass, field
from typing import IO, Iterator

import numpy as np

from .corpus import (
    NegativeSampler,
    Vocabulary,
    build_vocab,
    sentence_triple_arrays,
    shard_byte_ranges,
)
from .energy import DEFAULT_EPSILON, log_energy
from .model import Bank, ParameterStore, TrainConfig, WordMixture, init_store, softmax

__all__ = [
    "LrSchedule",
    "MixtureGrad",
    "TripleGradient",
    "EpochStats",
    "TrainResult",
    "hinge_loss",
    "loss_gradient",
    "adagrad_step",
    "train",
]

_LOG_2PI = np.log(2.0 * np.pi)

# Adagrad denominator stabilizer; standard value, not model-sensitive.
ADAGRAD_DELTA = 1e-8


@dataclass
class LrSchedule:
    """Linear decay from lr_start to lr_end over total_steps, constant after."""

    lr_start: float
    lr_end: float
    total_steps: int

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")

    def lr(self, step: int) -> float:
        frac = min(step / self.total_steps, 1.0)
        return self.lr_start + (self.lr_end - self.lr_start) * frac


@dataclass
class MixtureGrad:
    """Gradient of the loss with respect to one mixture's parameters."""

    means: np.ndarray  # (K, D)
    log_vars: np.ndarray  # (K, 1 or D)
    scores: np.ndarray  # (K,)


@dataclass
class TripleGradient:
    """Gradients for the three words touched by one training triple: the
    center (input bank) and the positive/negative contexts (output bank).
    All records are identically zero when the hinge is inactive."""

    center: MixtureGrad
    positive: MixtureGrad
    negative: MixtureGrad
    loss: float
    center_id: int | None = None
    positive_id: int | None = None
    negative_id: int | None = None

    @property
    def active(self) -> bool:
        return self.loss > 0


@dataclass
class EpochStats:
    epoch: int
    triples: int
    mean_loss: float
    lr: float


@dataclass
class TrainResult:
    store: ParameterStore
    vocab: Vocabulary
    epochs: list[EpochStats] = field(default_factory=list)


def hinge_loss(
    w: WordMixture,
    c: WordMixture,
    c_neg: WordMixture,
    margin: float,
    epsilon: float = DEFAULT_EPSILON,
) -> float:
    """max(0, margin - logE(w, c) + logE(w, c_neg))."""
    return max(
        0.0, margin - log_energy(w, c, epsilon) + log_energy(w, c_neg, epsilon)
    )


def _pair_energy_grads(
    mu_a: np.ndarray,
    lv_a: np.ndarray,
    sc_a: np.ndarray,
    mu_b: np.ndarray,
    lv_b: np.ndarray,
    sc_b: np.ndarray,
    epsilon: float,
):
    """Batched log energy of mixture pairs (a, b) and its gradients.

    Inputs are float64 batches: means (B, K, D), log-variances (B, K, 1 or D),
    scores (B, K). Returns the log energies (B,) and d logE / d each of the
    six inputs, batched likewise.
    """
    batch, k_a, dim = mu_a.shape
    k_b = mu_b.shape[1]
    spherical = lv_a.shape[-1] == 1

    d_a = np.exp(lv_a)  # (B, Ka, Dv)
    d_b = np.exp(lv_b)
    s = d_a[:, :, None, :] + d_b[:, None, :, :] + epsilon  # (B, Ka, Kb, Dv)
    diff = mu_a[:, :, None, :] - mu_b[:, None, :, :]  # (B, Ka, Kb, D)

    if spherical:
        s0 = s[..., 0]  # (B, Ka, Kb)
        quad = (diff * diff).sum(axis=-1) / s0
        log_det = dim * np.log(s0)
    else:
        quad_r = diff * diff / s  # (B, Ka, Kb, D)
        quad = quad_r.sum(axis=-1)
        log_det = np.log(s).sum(axis=-1)
    xi = -0.5 * log_det - 0.5 * dim * _LOG_2PI - 0.5 * quad  # (B, Ka, Kb)

    p_a = softmax(sc_a)  # (B, Ka)
    p_b = softmax(sc_b)
    log_terms = np.log(p_a)[:, :, None] + np.log(p_b)[:, None, :] + xi
    flat = log_terms.reshape(batch, k_a * k_b)
    m = flat.max(axis=1)
    log_e = m + np.log(np.exp(flat - m[:, None]).sum(axis=1))
    resp = np.exp(log_terms - log_e[:, None, None])  # responsibilities, sum 1

    # means: d xi / d mu_a = -diff/s (and +diff/s for b)
    if spherical:
        weighted = (resp / s0)[..., None] * diff  # (B, Ka, Kb, D)
    else:
        weighted = resp[..., None] * (diff / s)
    g_mu_a = -weighted.sum(axis=2)
    g_mu_b = weighted.sum(axis=1)

    # log-variances: d xi / d s = (quad_r - 1) / (2 s) per coordinate; both
    # variances enter through the sum s, then chain through d = exp(lv)
    if spherical:
        g_s = 0.5 * (quad - dim) / s0  # (B, Ka, Kb)
        g_lv_a = (resp * g_s).sum(axis=2)[..., None] * d_a
        g_lv_b = (resp * g_s).sum(axis=1)[..., None] * d_b
    else:
        g_s = 0.5 * (quad_r - 1.0) / s  # (B, Ka, Kb, D)
        g_lv_a = (resp[..., None] * g_s).sum(axis=2) * d_a
        g_lv_b = (resp[..., None] * g_s).sum(axis=1) * d_b

    # scores: d logE / d score_k = (responsibility mass of row/col k) - p_k
    g_sc_a = resp.sum(axis=2) - p_a
    g_sc_b = resp.sum(axis=1) - p_b

    return log_e, (g_mu_a, g_lv_a, g_sc_a), (g_mu_b, g_lv_b, g_sc_b)


def _gather(bank: Bank, ids: np.ndarray):
    return (
        bank.means[ids].astype(np.float64),
        bank.log_vars[ids].astype(np.float64),
        bank.scores[ids].astype(np.float64),
    )


def _batch_triple_grads(params_w, params_c, params_n, margin: float, epsilon: float):
    """Hinge losses and loss gradients for a batch of triples.

    Each params_* is a (means, log_vars, scores) float64 batch. Returns
    (losses, grads_center, grads_positive, grads_negative), where each grads_*
    is a (means, log_vars, scores) tuple of batched gradient arrays; rows with
    an inactive hinge are identically zero.
    """
    e_pos, g_pos_w, g_pos_c = _pair_energy_grads(*params_w, *params_c, epsilon)
    e_neg, g_neg_w, g_neg_n = _pair_energy_grads(*params_w, *params_n, epsilon)
    losses = np.maximum(0.0, margin - e_pos + e_neg)
    active = losses > 0

    def masked(arr):
        shape = (-1,) + (1,) * (arr.ndim - 1)
        return arr * active.reshape(shape)

    grads_center = tuple(masked(-gp + gn) for gp, gn in zip(g_pos_w, g_neg_w))
    grads_positive = tuple(masked(-gp) for gp in g_pos_c)
    grads_negative = tuple(masked(gn) for gn in g_neg_n)
    return losses, grads_center, grads_positive, grads_negative


def loss_gradient(
    w: WordMixture,
    c: WordMixture,
    c_neg: WordMixture,
    margin: float,
    epsilon: float = DEFAULT_EPSILON,
) -> TripleGradient:
    """Analytic gradient of hinge_loss with respect to every mean coordinate,
    log-variance coordinate, and mixture score of the three mixtures."""

    def as_batch(mix: WordMixture):
        return (
            np.asarray(mix.means, dtype=np.float64)[None],
            np.asarray(mix.log_vars, dtype=np.float64)[None],
            np.asarray(mix.scores, dtype=np.float64)[None],
        )

    losses, g_w, g_c, g_n = _batch_triple_grads(
        as_batch(w), as_batch(c), as_batch(c_neg), margin, epsilon
    )

    def unpack(g) -> MixtureGrad:
        return MixtureGrad(means=g[0][0], log_vars=g[1][0], scores=g[2][0])

    return TripleGradient(
        center=unpack(g_w),
        positive=unpack(g_c),
        negative=unpack(g_n),
        loss=float(losses[0]),
    )


def _apply_record(
    params: Bank,
    acc: Bank,
    word: int,
    grad: MixtureGrad,
    lr: float,
    delta: float = ADAGRAD_DELTA,
) -> None:
    """Adagrad update of one word's parameters: acc += g^2 first, then
    theta -= lr * g / (sqrt(acc) + delta), per scalar."""
    for p_arr, a_arr, g in (
        (params.means, acc.means, grad.means),
        (params.log_vars, acc.log_vars, grad.log_vars),
        (params.scores, acc.scores, grad.scores),
    ):
        a = a_arr[word].astype(np.float64) + g * g
        a_arr[word] = a
        p_arr[word] -= lr * g / (np.sqrt(a) + delta)


def adagrad_step(
    store: ParameterStore,
    grads: TripleGradient,
    lr: float,
    delta: float = ADAGRAD_DELTA,
) -> None:
    """Apply one triple's gradients to the store.

    The center record updates the input bank; the positive and negative
    records update the output bank (sequentially, so a positive/negative id
    collision applies both)."""
    if grads.center_id is None or grads.positive_id is None or grads.negative_id is None:
        raise ValueError("adagrad_step needs a TripleGradient with word ids set")
    if lr < 0:
        raise ValueError(f"lr must be >= 0, got {lr}")
    _apply_record(store.input_bank, store.input_acc, grads.center_id, grads.center, lr, delta)
    _apply_record(store.output_bank, store.output_acc, grads.positive_id, grads.positive, lr, delta)
    _apply_record(store.output_bank, store.output_acc, grads.negative_id, grads.negative, lr, delta)


def _apply_batch_bank(
    params: Bank,
    acc: Bank,
    ids: np.ndarray,
    g_means: np.ndarray,
    g_lv: np.ndarray,
    g_scores: np.ndarray,
    lr: float,
    delta: float = ADAGRAD_DELTA,
) -> None:
    """Merge per-triple gradients by word id, then one Adagrad update per
    touched word. Gather-update-scatter is lock-free on purpose: concurrent
    workers may interleave, which the training contract tolerates."""
    uniq, inverse = np.unique(ids, return_inverse=True)
    for arr, a_arr, g in (
        (params.means, acc.means, g_means),
        (params.log_vars, acc.log_vars, g_lv),
        (params.scores, acc.scores, g_scores),
    ):
        merged = np.zeros((len(uniq),) + g.shape[1:], dtype=np.float64)
        np.add.at(merged, inverse, g)
        a = a_arr[uniq].astype(np.float64) + merged * merged
        a_arr[uniq] = a
        arr[uniq] = arr[uniq] - (lr * merged / (np.sqrt(a) + delta)).astype(np.float32)


def _train_batch(
    store: ParameterStore,
    c_ids: np.ndarray,
    p_ids: np.ndarray,
    n_ids: np.ndarray,
    lr: float,
    margin: float,
    epsilon: float,
) -> float:
    """One gradient/update cycle over a batch of triples; returns loss sum."""
    params_w = _gather(store.input_bank, c_ids)
    params_c = _gather(store.output_bank, p_ids)
    params_n = _gather(store.output_bank, n_ids)
    losses, g_w, g_c, g_n = _batch_triple_grads(
        params_w, params_c, params_n, margin, epsilon
    )
    _apply_batch_bank(store.input_bank, store.input_acc, c_ids, *g_w, lr)
    out_ids = np.concatenate([p_ids, n_ids])
    out_grads = tuple(np.concatenate([a, b]) for a, b in zip(g_c, g_n))
    _apply_batch_bank(store.output_bank, store.output_acc, out_ids, *out_grads, lr)
    return float(losses.sum())


class _StepCounter:
    """Global triple counter shared by workers; only this and the loss totals
    are serialized, parameter updates stay lock-free."""

    def __init__(self):
        self._value = 0
        self._lock = threading.Lock()

    def add(self, n: int) -> int:
        """Advance by n; returns the count before this batch."""
        with self._lock:
            before = self._value
            self._value += n
            return before

    @property
    def value(self) -> int:
        with self._lock:
            return self._value


def _estimate_triples_per_epoch(vocab: Vocabulary, config: TrainConfig) -> int:
    """Upper-bound estimate used only to scale the lr schedule: expected
    post-subsampling token count times the full window width. Sentence
    boundaries make the true count smaller; the schedule clamps at the end."""
    if config.subsample_t > 0:
        freqs = vocab.frequencies()
        keep = np.minimum(1.0, np.sqrt(config.subsample_t / freqs))
        kept = float((vocab.counts * keep).sum())
    else:
        kept = float(vocab.total_tokens)
    return max(1, int(kept * 2 * config.window))


def _iter_batches(
    sentences: Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]], batch_size: int
) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Regroup per-sentence triple arrays into batches of batch_size (the
    final batch may be short)."""
    pending: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    buffered = 0
    for arrays in sentences:
        pending.append(arrays)
        buffered += len(arrays[0])
        if buffered < batch_size:
            continue
        cat = tuple(np.concatenate([p[i] for p in pending]) for i in range(3))
        start = 0
        while buffered - start >= batch_size:
            yield tuple(a[start : start + batch_size] for a in cat)
            start += batch_size
        pending = [tuple(a[start:] for a in cat)] if buffered > start else []
        buffered -= start
    if buffered:
        cat = tuple(np.concatenate([p[i] for p in pending]) for i in range(3))
        yield cat


def _run_shard(
    store: ParameterStore,
    corpus_path,
    vocab: Vocabulary,
    sampler: NegativeSampler,
    config: TrainConfig,
    schedule: LrSchedule,
    counter: _StepCounter,
    rng: np.random.Generator,
    byte_range: tuple[int, int],
) -> tuple[float, int]:
    """Train on one corpus shard for one epoch; returns (loss sum, triples)."""
    t = config.subsample_t if config.subsample_t > 0 else None
    sentences = sentence_triple_arrays(
        corpus_path, vocab, sampler, config.window, t, rng, byte_range
    )
    loss_sum = 0.0
    n_done = 0
    for c_ids, p_ids, n_ids in _iter_batches(sentences, config.batch_size):
        step = counter.add(len(c_ids))
        lr = schedule.lr(step)
        loss_sum += _train_batch(
            store, c_ids, p_ids, n_ids, lr, config.margin, config.epsilon
        )
        n_done += len(c_ids)
    return loss_sum, n_done


def train(
    corpus_path,
    config: TrainConfig,
    progress: IO[str] | None = sys.stderr,
) -> TrainResult:
    """Build the vocabulary, initialize parameters, and run the max-margin
    training loop for config.epochs passes over the corpus.

    Workers share the parameter store without locks (single-worker runs are
    deterministic for a fixed seed). One progress line per epoch goes to
    `progress` (standard error by default)."""
    config.validate()
    vocab = build_vocab(corpus_path, config.min_count)
    sampler = NegativeSampler(vocab)
    seed_seq = np.random.SeedSequence(config.seed)
    init_seq, *worker_seqs = seed_seq.spawn(config.workers + 1)
    store = init_store(len(vocab), config, np.random.default_rng(init_seq))
    worker_rngs = [np.random.default_rng(s) for s in worker_seqs]

    total_steps = _estimate_triples_per_epoch(vocab, config) * config.epochs
    schedule = LrSchedule(config.lr_start, config.lr_end, total_steps)
    counter = _StepCounter()
    shards = shard_byte_ranges(corpus_path, config.workers)

    result = TrainResult(store=store, vocab=vocab)
    for epoch in range(1, config.epochs + 1):
        epoch_loss = 0.0
        epoch_triples = 0
        if config.workers == 1:
            epoch_loss, epoch_triples = _run_shard(
                store, corpus_path, vocab, sampler, config, schedule, counter,
                worker_rngs[0], shards[0],
            )
        else:
            totals_lock = threading.Lock()

            def run(idx: int) -> None:
                nonlocal epoch_loss, epoch_triples
                loss, done = _run_shard(
                    store, corpus_path, vocab, sampler, config, schedule,
                    counter, worker_rngs[idx], shards[idx],
                )
                with totals_lock:
                    epoch_loss += loss
                    epoch_triples += done

            threads = [
                threading.Thread(target=run, args=(i,), name=f"trainer-{i}")
                for i in range(config.workers)
            ]
            for th in threads:
                th.start()
            for th in threads:
                th.join()

        mean_loss = epoch_loss / epoch_triples if epoch_triples else 0.0
        lr_now = schedule.lr(counter.value)
        result.epochs.append(
            EpochStats(epoch=epoch, triples=epoch_triples, mean_loss=mean_loss, lr=lr_now)
        )
        if progress is not None:
            print(
                f"epoch {epoch}  triples {epoch_triples}  "
                f"mean_loss {mean_loss:.6f}  lr {lr_now:.6g}",
                file=progress,
            )
    return result
