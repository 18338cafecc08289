"""Datasets, statevector and density-matrix ensembles, and the maps between them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimTooSmall, InvalidEnsemble, ZeroVector
from .numkernel import hermitian_eigendecompose

PROB_TOL = 1e-12
RENORMALIZE_TOL = 1e-9
NORM_TOL = 1e-10
DUPLICATE_TOL = 1e-12
EIGENVALUE_CUTOFF = 1e-12


def _checked_probs(probs, n: int) -> np.ndarray:
    """Validate a probability vector, renormalizing small decimal drift.

    A total within ``1e-9`` of one is rescaled; anything further off is an
    error.
    """
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    if p.shape[0] != n:
        raise InvalidEnsemble(f"{p.shape[0]} probabilities for {n} datapoints")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidEnsemble("probabilities must be finite and non-negative")
    total = float(p.sum())
    if abs(total - 1.0) > RENORMALIZE_TOL:
        raise InvalidEnsemble(f"probabilities sum to {total!r}, not 1")
    if abs(total - 1.0) > PROB_TOL:
        p = p / total
    return p


def _uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


@dataclass(frozen=True, eq=False)
class PureStateEnsemble:
    """Probability-weighted unit statevectors; ``states`` has shape (N, d)."""

    states: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        states = np.array(self.states, dtype=np.complex128)
        if states.ndim != 2 or states.shape[0] == 0 or states.shape[1] == 0:
            raise InvalidEnsemble(f"states must be a non-empty (N, d) array, got {states.shape}")
        if not np.all(np.isfinite(states)):
            raise InvalidEnsemble("states contain non-finite amplitudes")
        norms = np.linalg.norm(states, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOL)
        if bad.size:
            raise InvalidEnsemble(f"state {bad[0]} has norm {norms[bad[0]]!r}")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "probs", _checked_probs(self.probs, states.shape[0]))

    @classmethod
    def uniform(cls, states) -> "PureStateEnsemble":
        states = np.asarray(states)
        return cls(states, _uniform(states.shape[0]))

    @property
    def size(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return self.size


@dataclass(frozen=True, eq=False)
class MixedStateEnsemble:
    """Probability-weighted density matrices; ``states`` has shape (N, d, d)."""

    states: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        states = np.array(self.states, dtype=np.complex128)
        if states.ndim != 3 or states.shape[0] == 0 or states.shape[1] != states.shape[2]:
            raise InvalidEnsemble(f"states must be a non-empty (N, d, d) array, got {states.shape}")
        if not np.all(np.isfinite(states)):
            raise InvalidEnsemble("density matrices contain non-finite entries")
        herm = np.linalg.norm(states - np.conj(np.swapaxes(states, 1, 2)), axis=(1, 2))
        if np.any(herm > NORM_TOL):
            raise InvalidEnsemble(f"density matrix {int(np.argmax(herm))} is not Hermitian")
        traces = np.trace(states, axis1=1, axis2=2)
        if np.any(np.abs(traces - 1.0) > NORM_TOL):
            raise InvalidEnsemble("density matrices must have unit trace")
        # numpy's eigvalsh is only a positivity screen here; exact work uses Jacobi.
        if np.any(np.linalg.eigvalsh(states) < -NORM_TOL):
            raise InvalidEnsemble("density matrices must be positive semi-definite")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "probs", _checked_probs(self.probs, states.shape[0]))

    @property
    def size(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return self.size


@dataclass(frozen=True, eq=False)
class RawDataset:
    """Unnormalized feature vectors, shape (N, d), with datapoint weights."""

    vectors: np.ndarray
    probs: np.ndarray | None = None

    def __post_init__(self):
        vectors = np.array(self.vectors)
        if vectors.ndim != 2 or vectors.shape[0] == 0 or vectors.shape[1] == 0:
            raise InvalidEnsemble(f"vectors must be a non-empty (N, d) array, got {vectors.shape}")
        if not np.issubdtype(vectors.dtype, np.complexfloating):
            vectors = vectors.astype(np.float64)
        if not np.all(np.isfinite(vectors)):
            raise InvalidEnsemble("vectors contain non-finite features")
        probs = _uniform(vectors.shape[0]) if self.probs is None else self.probs
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "probs", _checked_probs(probs, vectors.shape[0]))

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def mean(self) -> np.ndarray:
        return self.probs @ self.vectors


def is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def amplitude_encode(raw: RawDataset, target_dim: int | None = None, *, qubits: bool = False) -> PureStateEnsemble:
    """Pad every feature vector with trailing zeros and scale it to unit norm.

    With ``qubits=True`` the target dimension must be a power of two.
    """
    d = raw.dim
    target = d if target_dim is None else int(target_dim)
    if target < d:
        raise DimTooSmall(f"target_dim {target} is smaller than the feature length {d}")
    if qubits and not is_power_of_two(target):
        raise DimTooSmall(f"target_dim {target} is not a power of two")
    norms = np.linalg.norm(raw.vectors, axis=1)
    zero = np.flatnonzero(norms < 1e-300)
    if zero.size:
        raise ZeroVector(f"datapoint {zero[0]} has zero norm")
    states = np.zeros((raw.size, target), dtype=np.complex128)
    states[:, :d] = raw.vectors / norms[:, None]
    return PureStateEnsemble(states, raw.probs.copy())


def center(raw: RawDataset) -> RawDataset:
    return RawDataset(raw.vectors - raw.mean(), raw.probs.copy())


def symmetrize(ens: PureStateEnsemble) -> PureStateEnsemble:
    """The 2N-point ensemble {(p/2, psi)} + {(p/2, -psi)}; exactly centered."""
    states = np.concatenate([ens.states, -ens.states])
    probs = np.concatenate([ens.probs, ens.probs]) / 2.0
    return PureStateEnsemble(states, probs)


def outer_product_map(ens: PureStateEnsemble) -> MixedStateEnsemble:
    rhos = np.einsum("ij,ik->ijk", ens.states, ens.states.conj())
    return MixedStateEnsemble(rhos, ens.probs.copy())


def aggregate_duplicates(ens: MixedStateEnsemble, tol: float = DUPLICATE_TOL) -> MixedStateEnsemble:
    """Merge density matrices within Frobenius distance ``tol``, summing weights.

    Each state joins the first earlier representative it matches, so the output
    keeps first-occurrence order.
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    reps: list[int] = []
    weights: list[float] = []
    flat = ens.states.reshape(ens.size, -1)
    for i in range(ens.size):
        if reps:
            dist = np.linalg.norm(flat[reps] - flat[i], axis=1)
            k = int(np.argmin(dist))
            if dist[k] <= tol:
                weights[k] += ens.probs[i]
                continue
        reps.append(i)
        weights.append(float(ens.probs[i]))
    return MixedStateEnsemble(ens.states[reps], np.array(weights))


def mixed_to_effective(ens: MixedStateEnsemble, cutoff: float = EIGENVALUE_CUTOFF) -> PureStateEnsemble:
    """Unravel each density matrix through its eigendecomposition.

    Eigenpairs with eigenvalue above ``cutoff`` become pure datapoints with
    weight ``p_i * s_(i,m)``.
    """
    states, probs = [], []
    for p, rho in zip(ens.probs, ens.states):
        spec = hermitian_eigendecompose(rho)
        for s, vec in zip(spec.eigenvalues[::-1], spec.eigenvectors[:, ::-1].T):
            if s > cutoff:
                states.append(vec)
                probs.append(p * s)
    probs = np.array(probs)
    return PureStateEnsemble(np.array(states), probs / probs.sum())
