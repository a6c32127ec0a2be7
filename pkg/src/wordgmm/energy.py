"""Closed-form log expected-likelihood kernel between Gaussian mixtures,
its per-component-pair partial energies, and Gaussian KL divergence.

Everything is computed in the log domain. Variance records are arrays of
shape (1,) (spherical, broadcast across dimensions) or (D,) (diagonal).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import WordMixture

__all__ = [
    "DEFAULT_EPSILON",
    "PartialEnergyMatrix",
    "log_partial_energy",
    "partial_energy_matrix",
    "log_energy",
    "kl_gaussian",
]

# Variance-sum stabilizer added inside both the log-determinant and inverse
# terms. Gradients elsewhere differentiate the perturbed expression, so
# finite-difference checks hold for the implemented function.
DEFAULT_EPSILON = 1e-4

_LOG_2PI = math.log(2.0 * math.pi)


def _check_variances(*variances: np.ndarray) -> None:
    for var in variances:
        if np.any(np.asarray(var) <= 0):
            raise ValueError(f"variances must be strictly positive, got {var}")


@dataclass
class PartialEnergyMatrix:
    """All K_f x K_g partial log energies xi[i, j] and the index of the
    largest one (ties broken by smallest (i, j) lexicographically)."""

    xi: np.ndarray
    max_index: tuple[int, int]

    @property
    def max_value(self) -> float:
        return float(self.xi[self.max_index])


def log_partial_energy(
    mu_f: np.ndarray,
    var_f: np.ndarray,
    mu_g: np.ndarray,
    var_g: np.ndarray,
    epsilon: float = DEFAULT_EPSILON,
) -> float:
    """Log density at zero of N(mu_f - mu_g, diag(var_f + var_g + epsilon)).

    This is the log of the product integral of the two component Gaussians:
    -1/2 sum_r log(s_r) - (D/2) log 2pi - 1/2 sum_r (mu_f - mu_g)_r^2 / s_r
    with s = var_f + var_g + epsilon. Spherical records broadcast their one
    variance across all D dimensions.
    """
    mu_f = np.asarray(mu_f, dtype=np.float64)
    mu_g = np.asarray(mu_g, dtype=np.float64)
    var_f = np.atleast_1d(np.asarray(var_f, dtype=np.float64))
    var_g = np.atleast_1d(np.asarray(var_g, dtype=np.float64))
    _check_variances(var_f, var_g)
    dim = mu_f.shape[-1]
    s = var_f + var_g + epsilon
    if s.size == 1:
        log_det = dim * math.log(s[0])
    else:
        log_det = float(np.log(s).sum())
    diff = mu_f - mu_g
    quad = float((diff * diff / s).sum())
    return -0.5 * log_det - 0.5 * dim * _LOG_2PI - 0.5 * quad


def partial_energy_matrix(
    f: WordMixture, g: WordMixture, epsilon: float = DEFAULT_EPSILON
) -> PartialEnergyMatrix:
    """Partial log energies for every component pair of f and g."""
    var_f = f.variances  # (K_f, 1 or D)
    var_g = g.variances
    _check_variances(var_f, var_g)
    dim = f.dim
    s = var_f[:, None, :] + var_g[None, :, :] + epsilon  # (K_f, K_g, 1 or D)
    if s.shape[-1] == 1:
        log_det = dim * np.log(s[..., 0])
    else:
        log_det = np.log(s).sum(axis=-1)
    diff = f.means.astype(np.float64)[:, None, :] - g.means.astype(np.float64)[None, :, :]
    quad = (diff * diff / s).sum(axis=-1)
    xi = -0.5 * log_det - 0.5 * dim * _LOG_2PI - 0.5 * quad
    flat_argmax = int(np.argmax(xi))  # first maximum = lexicographically smallest
    max_index = np.unravel_index(flat_argmax, xi.shape)
    return PartialEnergyMatrix(xi=xi, max_index=(int(max_index[0]), int(max_index[1])))


def log_energy(
    f: WordMixture, g: WordMixture, epsilon: float = DEFAULT_EPSILON
) -> float:
    """Log of the expected likelihood kernel between mixtures f and g.

    Computed as xi_max + log sum_ij p_i q_j exp(xi_ij - xi_max), which agrees
    with the naive log sum p_i q_j exp(xi_ij) whenever that does not
    underflow, and stays finite for arbitrarily small partial energies.
    """
    pem = partial_energy_matrix(f, g, epsilon)
    xi_max = pem.max_value
    weights = f.weights[:, None] * g.weights[None, :]
    return xi_max + float(np.log((weights * np.exp(pem.xi - xi_max)).sum()))


def kl_gaussian(
    mu_f: np.ndarray,
    var_f: np.ndarray,
    mu_g: np.ndarray,
    var_g: np.ndarray,
) -> float:
    """KL(N_f || N_g) for diagonal (or spherical) Gaussians.

    1/2 sum_r [ var_f_r/var_g_r + (mu_g - mu_f)_r^2/var_g_r - 1
                + log(var_g_r/var_f_r) ].
    Asymmetric by definition; nonnegative, zero iff the parameters coincide.
    """
    mu_f = np.asarray(mu_f, dtype=np.float64)
    mu_g = np.asarray(mu_g, dtype=np.float64)
    var_f = np.atleast_1d(np.asarray(var_f, dtype=np.float64))
    var_g = np.atleast_1d(np.asarray(var_g, dtype=np.float64))
    _check_variances(var_f, var_g)
    dim = mu_f.shape[-1]
    diff = mu_g - mu_f
    ratio = var_f / var_g  # (1,) or (D,)
    if ratio.size == 1:
        trace_term = dim * (ratio[0] - 1.0 + math.log(1.0 / ratio[0]))
    else:
        trace_term = float((ratio - 1.0 - np.log(ratio)).sum())
    quad = float((diff * diff / var_g).sum())
    return 0.5 * (trace_term + quad)
