"""Command-line entry point: train, eval-sim, eval-entail, neighbors, dump,
and vocab subcommands.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Reports go to
standard output; progress and errors to standard error. Training flags
resolve as CLI flag > config file > built-in default, where the config file
is a flat `key = value` text file using TrainConfig field names.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from .corpus import build_vocab
from .errors import WordgmmError
from .metrics import (
    evaluate_entailment,
    evaluate_similarity,
    load_entailment_pairs,
    load_similarity_pairs,
    nearest_components,
    resolve_measure,
)
from .model import CovarianceKind, TrainConfig, load_model, save_model
from .trainer import train

_CONFIG_TYPES = {
    "dim": int,
    "k": int,
    "window": int,
    "margin": float,
    "batch_size": int,
    "lr_start": float,
    "lr_end": float,
    "subsample_t": float,
    "min_count": int,
    "epsilon": float,
    "init_var": float,
    "epochs": int,
    "cov": str,
    "workers": int,
    "seed": int,
}


def _read_config_file(path: str) -> dict:
    """Flat key=value config; blank lines and # comments are ignored."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise WordgmmError(f"{path}:{lineno}: expected key = value, got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _CONFIG_TYPES:
                raise WordgmmError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = _CONFIG_TYPES[key](value.strip())
            except ValueError:
                raise WordgmmError(
                    f"{path}:{lineno}: bad value {value.strip()!r} for {key}"
                ) from None
    return values


def _build_train_config(args: argparse.Namespace) -> TrainConfig:
    values: dict = {}
    if args.config:
        values.update(_read_config_file(args.config))
    cli_fields = {
        "dim": args.dim,
        "k": args.k,
        "window": args.window,
        "margin": args.margin,
        "batch_size": args.batch_size,
        "lr_start": args.lr,
        "lr_end": args.lr_end,
        "subsample_t": args.subsample,
        "min_count": args.min_count,
        "epsilon": args.epsilon,
        "init_var": args.init_var,
        "epochs": args.epochs,
        "cov": args.cov,
        "workers": args.workers,
        "seed": args.seed,
    }
    values.update({k: v for k, v in cli_fields.items() if v is not None})
    if "cov" in values:
        values["cov"] = CovarianceKind(values["cov"])
    return TrainConfig(**values).validate()


def cmd_train(args: argparse.Namespace) -> int:
    config = _build_train_config(args)
    result = train(args.corpus, config, progress=sys.stderr)
    save_model(result.store, result.vocab, args.out)
    print(
        f"saved {args.out}  vocab {len(result.vocab)}  "
        f"dim {config.dim}  k {config.k}  cov {config.cov.value}"
    )
    return 0


def cmd_vocab(args: argparse.Namespace) -> int:
    vocab = build_vocab(args.corpus, args.min_count)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            vocab.write_dump(fh)
    else:
        vocab.write_dump(sys.stdout)
    return 0


def cmd_dump(args: argparse.Namespace) -> int:
    store, vocab, _ = load_model(args.model)
    bank = store.input_bank if args.bank == "input" else store.output_bank
    for word_id, token in enumerate(vocab.tokens):
        mix = bank.mixture(word_id)
        weights = mix.weights
        variances = mix.variances
        for i in range(store.k):
            mean_txt = " ".join(f"{x:.6g}" for x in mix.means[i])
            var_txt = " ".join(f"{x:.6g}" for x in variances[i])
            print(f"{token}:{i}  {weights[i]:.6f}  {mean_txt}  {var_txt}")
    return 0


def cmd_neighbors(args: argparse.Namespace) -> int:
    store, vocab, _ = load_model(args.model)
    for label, score in nearest_components(store, vocab, args.query, args.top):
        print(f"{label}\t{score:.6f}")
    return 0


def cmd_eval_sim(args: argparse.Namespace) -> int:
    store, vocab, _ = load_model(args.model)
    pairs = load_similarity_pairs(args.dataset)
    measure = resolve_measure(args.metric)
    report = evaluate_similarity(store, vocab, pairs, measure)
    rho_txt = "degenerate" if math.isnan(report.rho) else f"{report.rho * 100:.2f}"
    print(
        f"dataset {Path(args.dataset).stem}  pairs {report.pairs_scored}  "
        f"dropped {report.pairs_dropped}  rho_x100 {rho_txt}"
    )
    return 0


def cmd_eval_entail(args: argparse.Namespace) -> int:
    store, vocab, _ = load_model(args.model)
    pairs = load_entailment_pairs(args.dataset)
    measure = resolve_measure(args.metric)
    report = evaluate_entailment(store, vocab, pairs, measure)
    print(
        f"dataset {Path(args.dataset).stem}  pairs {report.pairs_scored}  "
        f"dropped {report.pairs_dropped}  best_ap {report.sweep.best_ap:.4f}  "
        f"best_f1 {report.sweep.best_f1:.4f}  f1_threshold {report.sweep.f1_threshold:.6g}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wordgmm",
        description="Train and evaluate Gaussian-mixture word embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a text corpus")
    p_train.add_argument("--corpus", required=True, help="whitespace-tokenized text file")
    p_train.add_argument("--out", required=True, help="output model file")
    p_train.add_argument("--config", help="key = value config file")
    p_train.add_argument("--dim", type=int, help="embedding dimension (default 50)")
    p_train.add_argument("--k", type=int, help="mixture components per word (default 2)")
    p_train.add_argument("--window", type=int, help="context window size (default 10)")
    p_train.add_argument("--margin", type=float, help="hinge margin (default 1)")
    p_train.add_argument("--batch-size", type=int, help="triples per update (default 128)")
    p_train.add_argument("--lr", type=float, help="starting learning rate (default 0.05)")
    p_train.add_argument("--lr-end", type=float, help="final learning rate (default 1e-5)")
    p_train.add_argument(
        "--subsample", type=float,
        help="frequent-word subsampling threshold, 0 disables (default 1e-5)",
    )
    p_train.add_argument("--min-count", type=int, help="discard rarer words (default 100)")
    p_train.add_argument("--epsilon", type=float, help="variance-sum stabilizer (default 1e-4)")
    p_train.add_argument("--init-var", type=float, help="initial variance (default 0.05)")
    p_train.add_argument("--epochs", type=int, help="passes over the corpus (default 1)")
    p_train.add_argument(
        "--cov", choices=["spherical", "diagonal"], help="covariance kind (default spherical)"
    )
    p_train.add_argument("--workers", type=int, help="parallel training workers (default 1)")
    p_train.add_argument("--seed", type=int, help="random seed (default 1)")
    p_train.set_defaults(func=cmd_train)

    p_vocab = sub.add_parser("vocab", help="build and dump a vocabulary")
    p_vocab.add_argument("--corpus", required=True)
    p_vocab.add_argument("--min-count", type=int, default=100)
    p_vocab.add_argument("--out", help="write token<TAB>count lines here (default stdout)")
    p_vocab.set_defaults(func=cmd_vocab)

    p_dump = sub.add_parser("dump", help="print model parameters as text")
    p_dump.add_argument("--model", required=True)
    p_dump.add_argument("--bank", choices=["input", "output"], default="input")
    p_dump.set_defaults(func=cmd_dump)

    p_nn = sub.add_parser("neighbors", help="nearest components of a word or word:i")
    p_nn.add_argument("--model", required=True)
    p_nn.add_argument("--query", required=True, help="token or token:i")
    p_nn.add_argument("-n", "--top", type=int, default=10)
    p_nn.add_argument("--metric", choices=["cos"], default="cos",
                      help="component ranking metric (cosine)")
    p_nn.set_defaults(func=cmd_neighbors)

    p_sim = sub.add_parser("eval-sim", help="Spearman correlation on a similarity dataset")
    p_sim.add_argument("--model", required=True)
    p_sim.add_argument("--dataset", required=True, help="TSV word1, word2, gold score")
    p_sim.add_argument("--metric", default="mc",
                       help="mc (max cosine), el (expected likelihood), me (min Euclidean)")
    p_sim.set_defaults(func=cmd_eval_sim)

    p_ent = sub.add_parser("eval-entail", help="best AP / best F1 on an entailment dataset")
    p_ent.add_argument("--model", required=True)
    p_ent.add_argument("--dataset", required=True, help="TSV word1, word2, label in {0,1}")
    p_ent.add_argument("--metric", choices=["cos", "kl"], default="kl")
    p_ent.set_defaults(func=cmd_eval_entail)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (WordgmmError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
