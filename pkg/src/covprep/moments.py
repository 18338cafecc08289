"""Mean vector, covariance, second moments and the ensemble-average density matrix.

Weights are the datapoint probabilities themselves, so a uniform ensemble
gives the 1/N normalization (no Bessel correction).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import MixedStateEnsemble, PureStateEnsemble
from .numkernel import frobenius_distance

COMPENSATED_THRESHOLD = 10_000
CHUNK = 2048


def _weighted_gram(probs: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """sum_i p_i v_i v_i^dagger in datapoint order.

    Large ensembles are reduced chunk by chunk with Kahan-compensated
    addition of the chunk partials.
    """
    n = vecs.shape[0]
    if n <= COMPENSATED_THRESHOLD:
        return (vecs.T * probs) @ vecs.conj()
    total = np.zeros((vecs.shape[1], vecs.shape[1]), dtype=np.result_type(vecs, np.complex128))
    comp = np.zeros_like(total)
    for start in range(0, n, CHUNK):
        block = vecs[start:start + CHUNK]
        part = (block.T * probs[start:start + CHUNK]) @ block.conj()
        y = part - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def _weighted_sum(probs: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    n = vecs.shape[0]
    if n <= COMPENSATED_THRESHOLD:
        return probs @ vecs
    total = np.zeros(vecs.shape[1:], dtype=np.result_type(vecs, np.complex128))
    comp = np.zeros_like(total)
    for start in range(0, n, CHUNK):
        y = probs[start:start + CHUNK] @ vecs[start:start + CHUNK] - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def mean_vector(ens: PureStateEnsemble) -> np.ndarray:
    return _weighted_sum(ens.probs, ens.states)


def second_moment_matrix(ens: PureStateEnsemble) -> np.ndarray:
    """T_jk = sum_i p_i y_j conj(y_k)."""
    return _weighted_gram(ens.probs, ens.states)


def covariance_matrix(ens: PureStateEnsemble) -> np.ndarray:
    """Q_jk = sum_i p_i b_j conj(b_k) over the centered vectors b = y - mu."""
    centered = ens.states - mean_vector(ens)
    return _weighted_gram(ens.probs, centered)


def mean_outer(mu) -> np.ndarray:
    """M = mu mu^dagger; the zero matrix when mu is zero."""
    mu = np.asarray(mu)
    return np.outer(mu, mu.conj())


def mean_direction(mu) -> tuple[float, np.ndarray | None]:
    """Return ``(||mu||^2, mu/||mu||)``, the direction being ``None`` for mu = 0."""
    mu = np.asarray(mu)
    norm = float(np.linalg.norm(mu))
    if norm == 0.0:
        return 0.0, None
    return norm * norm, mu / norm


def ensemble_density(ens: PureStateEnsemble | MixedStateEnsemble) -> np.ndarray:
    """rho_bar = sum_i p_i rho_i."""
    if isinstance(ens, PureStateEnsemble):
        return _weighted_gram(ens.probs, ens.states)
    return np.tensordot(ens.probs, ens.states, axes=1)


@dataclass(frozen=True)
class MomentSet:
    mean: np.ndarray
    covariance: np.ndarray
    second_moments: np.ndarray
    mean_outer: np.ndarray
    ensemble_density: np.ndarray

    @property
    def mean_norm_sq(self) -> float:
        return float(np.vdot(self.mean, self.mean).real)

    def identity_residual(self) -> float:
        return frobenius_distance(self.ensemble_density, self.covariance + self.mean_outer)


def moments(ens: PureStateEnsemble) -> MomentSet:
    mu = mean_vector(ens)
    rho = ensemble_density(ens)
    return MomentSet(
        mean=mu,
        covariance=covariance_matrix(ens),
        # T and rho_bar are the same sum; keep one computation.
        second_moments=rho,
        mean_outer=mean_outer(mu),
        ensemble_density=rho,
    )


def decomposition_identity_residual(ens: PureStateEnsemble) -> float:
    """||rho_bar - Q - M||_F."""
    return moments(ens).identity_residual()
