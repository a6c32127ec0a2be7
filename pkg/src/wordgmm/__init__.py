"""Gaussian-mixture word embeddings: each vocabulary word is a K-component
Gaussian mixture trained from raw text with an energy-based max-margin
objective, plus evaluation tools for word similarity and lexical entailment.
"""

from .corpus import NegativeSampler, TrainingTriple, Vocabulary, build_vocab
from .energy import kl_gaussian, log_energy, log_partial_energy
from .errors import ConfigError, ModelFormatError, WordgmmError
from .model import (
    CovarianceKind,
    ParameterStore,
    TrainConfig,
    WordMixture,
    init_store,
    load_model,
    save_model,
)
from .trainer import TrainResult, hinge_loss, loss_gradient, train

__all__ = [
    "CovarianceKind",
    "ConfigError",
    "ModelFormatError",
    "NegativeSampler",
    "ParameterStore",
    "TrainConfig",
    "TrainResult",
    "TrainingTriple",
    "Vocabulary",
    "WordMixture",
    "WordgmmError",
    "build_vocab",
    "hinge_loss",
    "init_store",
    "kl_gaussian",
    "load_model",
    "log_energy",
    "log_partial_energy",
    "loss_gradient",
    "save_model",
    "train",
]

__version__ = "0.1.0"
