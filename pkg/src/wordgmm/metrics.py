"""Evaluation-time scores between word mixtures, Spearman rank correlation,
entailment threshold sweeps, dataset readers, and component-level nearest
neighbors.

All pairwise measures are pure functions of two WordMixtures. Measures where
smaller means more similar (min_euclidean, min_kl) are negated wherever a
"higher is better" score is required, e.g. for rank correlations.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .corpus import Vocabulary
from .energy import DEFAULT_EPSILON, kl_gaussian, log_energy
from .errors import ConfigError
from .model import ParameterStore, WordMixture

__all__ = [
    "EvalPair",
    "SimilarityMeasure",
    "MEASURES",
    "resolve_measure",
    "max_cosine",
    "min_euclidean",
    "avg_cosine",
    "min_kl",
    "max_neg_kl",
    "elk_score",
    "spearman",
    "best_threshold_sweep",
    "SweepResult",
    "load_similarity_pairs",
    "load_entailment_pairs",
    "evaluate_similarity",
    "evaluate_entailment",
    "nearest_components",
]


@dataclass(frozen=True)
class EvalPair:
    """Two tokens with a gold similarity score or a binary entailment label."""

    word1: str
    word2: str
    gold: float


def _cosine_matrix(f: WordMixture, g: WordMixture) -> np.ndarray:
    """Cosine of every component-mean pair; pairs involving a zero-norm mean
    score 0 by convention."""
    mf = f.means.astype(np.float64)
    mg = g.means.astype(np.float64)
    nf = np.linalg.norm(mf, axis=1)
    ng = np.linalg.norm(mg, axis=1)
    denom = nf[:, None] * ng[None, :]
    dots = mf @ mg.T
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.where(denom > 0, dots / np.where(denom > 0, denom, 1.0), 0.0)
    return cos


def max_cosine(f: WordMixture, g: WordMixture) -> float:
    """Best cosine similarity of mean vectors over all component pairs."""
    return float(_cosine_matrix(f, g).max())


def avg_cosine(f: WordMixture, g: WordMixture) -> float:
    """Cosine similarities averaged under the component probabilities:
    sum_ij p_i q_j cos(mu_f_i, mu_g_j)."""
    cos = _cosine_matrix(f, g)
    return float((f.weights[:, None] * g.weights[None, :] * cos).sum())


def min_euclidean(f: WordMixture, g: WordMixture) -> float:
    """Smallest Euclidean distance between component means (a dissimilarity)."""
    diff = f.means.astype(np.float64)[:, None, :] - g.means.astype(np.float64)[None, :, :]
    return float(np.sqrt((diff * diff).sum(axis=-1)).min())


def min_kl(f: WordMixture, g: WordMixture) -> float:
    """Minimum KL(f_i || g_j) over component pairs; asymmetric."""
    var_f = f.variances
    var_g = g.variances
    best = np.inf
    for i in range(f.k):
        for j in range(g.k):
            best = min(best, kl_gaussian(f.means[i], var_f[i], g.means[j], var_g[j]))
    return float(best)


def max_neg_kl(f: WordMixture, g: WordMixture) -> float:
    """-min_kl(f, g): the higher-is-better orientation of the KL measure."""
    return -min_kl(f, g)


def elk_score(f: WordMixture, g: WordMixture, epsilon: float = DEFAULT_EPSILON) -> float:
    """Log expected likelihood kernel, surfaced as a similarity score."""
    return log_energy(f, g, epsilon)


@dataclass(frozen=True)
class SimilarityMeasure:
    name: str
    fn: Callable[[WordMixture, WordMixture], float]
    higher_is_better: bool

    def ranking_score(self, f: WordMixture, g: WordMixture) -> float:
        """Score oriented so that higher always means more similar."""
        value = self.fn(f, g)
        return value if self.higher_is_better else -value


MEASURES: dict[str, SimilarityMeasure] = {
    m.name: m
    for m in [
        SimilarityMeasure("max_cosine", max_cosine, True),
        SimilarityMeasure("expected_likelihood", elk_score, True),
        SimilarityMeasure("min_euclidean", min_euclidean, False),
        SimilarityMeasure("avg_cosine", avg_cosine, True),
        SimilarityMeasure("min_kl", min_kl, False),
        SimilarityMeasure("max_neg_kl", max_neg_kl, True),
    ]
}

# short names as used in the evaluation reports
_ALIASES = {
    "mc": "max_cosine",
    "el": "expected_likelihood",
    "me": "min_euclidean",
    "cos": "max_cosine",
    "kl": "max_neg_kl",
}


def resolve_measure(name: str) -> SimilarityMeasure:
    key = _ALIASES.get(name, name)
    try:
        return MEASURES[key]
    except KeyError:
        raise ConfigError(
            f"unknown measure {name!r}; choose from "
            f"{sorted(MEASURES) + sorted(_ALIASES)}"
        ) from None


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman rank correlation: Pearson correlation of fractional ranks,
    with ties receiving average ranks.

    Returns nan when either argument has zero rank variance (all values
    tied), which callers should report as a degenerate result. Raises
    ValueError on length mismatch or fewer than two points.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError(f"inputs must be equal-length 1-D, got {xs.shape} vs {ys.shape}")
    if len(xs) < 2:
        raise ValueError(f"need at least 2 points, got {len(xs)}")
    rx = rankdata(xs)
    ry = rankdata(ys)
    sx = rx.std()
    sy = ry.std()
    if sx == 0 or sy == 0:
        return float("nan")
    return float(((rx - rx.mean()) * (ry - ry.mean())).mean() / (sx * sy))


@dataclass(frozen=True)
class SweepResult:
    """Outcome of an entailment threshold sweep."""

    best_ap: float
    best_f1: float
    f1_threshold: float


def best_threshold_sweep(
    scores: Sequence[float], labels: Sequence[int]
) -> SweepResult:
    """Average precision of the score ranking plus the best F1 over all
    thresholds (predict positive when score >= threshold).

    AP is threshold-free: the mean of precision at each positive in the
    descending-score ranking. Requires at least one positive and one
    negative label.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-D")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise ValueError("need at least one positive and one negative label")

    order = np.argsort(-scores, kind="stable")
    ranked_labels = labels[order].astype(np.int64)
    ranked_scores = scores[order]
    cum_tp = np.cumsum(ranked_labels)
    precision_at = cum_tp / np.arange(1, len(labels) + 1)
    best_ap = float(precision_at[ranked_labels == 1].mean())

    # distinct thresholds = last position of each equal-score run
    boundary = np.nonzero(np.diff(ranked_scores))[0]
    boundary = np.append(boundary, len(ranked_scores) - 1)
    f1 = 2.0 * cum_tp[boundary] / ((boundary + 1) + n_pos)
    best = int(np.argmax(f1))
    return SweepResult(
        best_ap=best_ap,
        best_f1=float(f1[best]),
        f1_threshold=float(ranked_scores[boundary[best]]),
    )


def _read_tsv(path: str | os.PathLike) -> list[tuple[int, list[str]]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) < 3:
                raise ValueError(
                    f"{path}:{lineno}: expected word1<TAB>word2<TAB>value, got {line!r}"
                )
            rows.append((lineno, fields))
    return rows


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def load_similarity_pairs(path: str | os.PathLike) -> list[EvalPair]:
    """Read a word-similarity dataset: TSV word1, word2, gold score. A header
    row is detected by a non-numeric third field and skipped."""
    rows = _read_tsv(path)
    if rows and not _is_number(rows[0][1][2]):
        rows = rows[1:]
    pairs = []
    for lineno, fields in rows:
        try:
            gold = float(fields[2])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: bad gold score {fields[2]!r}") from None
        pairs.append(EvalPair(fields[0], fields[1], gold))
    return pairs


def load_entailment_pairs(path: str | os.PathLike) -> list[EvalPair]:
    """Read an entailment dataset: TSV word1, word2, binary label."""
    rows = _read_tsv(path)
    if rows and not _is_number(rows[0][1][2]):
        rows = rows[1:]
    pairs = []
    for lineno, fields in rows:
        try:
            label = float(fields[2])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: bad label {fields[2]!r}") from None
        if label not in (0.0, 1.0):
            raise ValueError(f"{path}:{lineno}: label must be 0 or 1, got {fields[2]}")
        pairs.append(EvalPair(fields[0], fields[1], label))
    return pairs


@dataclass(frozen=True)
class SimilarityReport:
    pairs_scored: int
    pairs_dropped: int
    rho: float


@dataclass(frozen=True)
class EntailmentReport:
    pairs_scored: int
    pairs_dropped: int
    sweep: SweepResult


def _scored_pairs(
    store: ParameterStore,
    vocab: Vocabulary,
    pairs: Sequence[EvalPair],
    measure: SimilarityMeasure,
) -> tuple[list[float], list[float], int]:
    """Ranking-oriented scores for all in-vocabulary pairs (input bank)."""
    scores: list[float] = []
    golds: list[float] = []
    dropped = 0
    for pair in pairs:
        id1 = vocab.token_to_id.get(pair.word1)
        id2 = vocab.token_to_id.get(pair.word2)
        if id1 is None or id2 is None:
            dropped += 1
            continue
        f = store.input_mixture(id1)
        g = store.input_mixture(id2)
        scores.append(measure.ranking_score(f, g))
        golds.append(pair.gold)
    return scores, golds, dropped


def evaluate_similarity(
    store: ParameterStore,
    vocab: Vocabulary,
    pairs: Sequence[EvalPair],
    measure: SimilarityMeasure,
) -> SimilarityReport:
    """Spearman correlation between gold scores and the measure's scores.
    Out-of-vocabulary pairs are dropped and counted."""
    scores, golds, dropped = _scored_pairs(store, vocab, pairs, measure)
    if len(scores) < 2:
        raise ConfigError(
            f"only {len(scores)} pairs remain after dropping {dropped} "
            "out-of-vocabulary pairs; need at least 2"
        )
    rho = spearman(golds, scores)
    return SimilarityReport(pairs_scored=len(scores), pairs_dropped=dropped, rho=rho)


def evaluate_entailment(
    store: ParameterStore,
    vocab: Vocabulary,
    pairs: Sequence[EvalPair],
    measure: SimilarityMeasure,
) -> EntailmentReport:
    """Best AP and best F1 for binary entailment labels under the measure."""
    scores, golds, dropped = _scored_pairs(store, vocab, pairs, measure)
    if not scores:
        raise ConfigError(f"no pairs remain after dropping {dropped} OOV pairs")
    sweep = best_threshold_sweep(scores, [int(g) for g in golds])
    return EntailmentReport(
        pairs_scored=len(scores), pairs_dropped=dropped, sweep=sweep
    )


def parse_component_query(query: str) -> tuple[str, int | None]:
    """Split `word:i` into (word, i); a plain token returns (token, None)."""
    token, sep, comp = query.rpartition(":")
    if sep and comp.isdigit():
        return token, int(comp)
    return query, None


def nearest_components(
    store: ParameterStore,
    vocab: Vocabulary,
    query: str,
    n: int = 10,
) -> list[tuple[str, float]]:
    """Top-n components `word:i` ranked by cosine between component means
    (input bank). A plain-token query scores each candidate by the maximum
    over the query's components; the query word itself is excluded."""
    token, comp = parse_component_query(query)
    word_id = vocab.token_to_id.get(token)
    if word_id is None:
        raise ConfigError(f"token {token!r} is not in the vocabulary")
    k = store.k
    if comp is not None and not 0 <= comp < k:
        raise ConfigError(f"component {comp} out of range for K={k}")

    means = store.input_bank.means.astype(np.float64)  # (V, K, D)
    v = means.shape[0]
    flat = means.reshape(v * k, -1)
    norms = np.linalg.norm(flat, axis=1)
    unit = np.where(norms[:, None] > 0, flat / np.where(norms[:, None] > 0, norms[:, None], 1.0), 0.0)

    if comp is None:
        query_vecs = unit[word_id * k : (word_id + 1) * k]
    else:
        query_vecs = unit[word_id * k + comp : word_id * k + comp + 1]
    scores = (unit @ query_vecs.T).max(axis=1)
    scores[word_id * k : (word_id + 1) * k] = -np.inf  # never self

    n = min(n, v * k - k)
    top = np.argsort(-scores, kind="stable")[:n]
    return [(f"{vocab.tokens[idx // k]}:{idx % k}", float(scores[idx])) for idx in top]
