"""Classical and quantum PCA pipelines: fit, project, infidelity curves, overlaps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import PureStateEnsemble
from .errors import DimMismatch, NTooLarge, OutOfRange
from .moments import covariance_matrix, ensemble_density, mean_vector
from .numkernel import SpectralDecomposition, hermitian_eigendecompose
from .spectral import eigenvalue_clusters

SOURCES = ("covariance", "ensemble_density")


def canonicalize_phase(vecs: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real and positive.

    Ties go to the lowest index.
    """
    vecs = np.array(vecs, dtype=np.complex128)
    if vecs.ndim == 1:
        return canonicalize_phase(vecs[:, None])[:, 0]
    mags = np.abs(vecs)
    # round so that near-equal magnitudes resolve to the first index
    pivot = np.argmax(np.round(mags, 12), axis=0)
    entries = vecs[pivot, np.arange(vecs.shape[1])]
    scale = np.abs(entries)
    phases = np.where(scale > 0, np.conj(entries) / np.where(scale > 0, scale, 1.0), 1.0)
    out = vecs * phases
    # remove the rounding residue so the pivot is exactly real
    out[pivot, np.arange(vecs.shape[1])] = scale
    return out


@dataclass(frozen=True)
class PcaModel:
    """Top-n principal components, largest eigenvalue first.

    ``components`` has shape (d, n); column 0 is the leading component.
    """

    components: np.ndarray
    eigenvalues: np.ndarray
    source: str

    @property
    def dim(self) -> int:
        return self.components.shape[0]

    @property
    def n(self) -> int:
        return self.components.shape[1]

    def truncate(self, n: int) -> "PcaModel":
        if not 1 <= n <= self.n:
            raise NTooLarge(f"cannot keep {n} of {self.n} components")
        return PcaModel(self.components[:, :n], self.eigenvalues[:n], self.source)


def source_matrix(ens: PureStateEnsemble, source: str) -> np.ndarray:
    if source == "covariance":
        return covariance_matrix(ens)
    if source == "ensemble_density":
        return ensemble_density(ens)
    raise OutOfRange(f"unknown source {source!r}; expected one of {SOURCES}")


def model_from_spectrum(spec: SpectralDecomposition, n: int, source: str) -> PcaModel:
    if not 1 <= n <= spec.dim:
        raise NTooLarge(f"n={n} must lie in [1, {spec.dim}]")
    vals, vecs = spec.descending()
    return PcaModel(canonicalize_phase(vecs[:, :n]), vals[:n], source)


def fit(ens: PureStateEnsemble, n: int, source: str = "ensemble_density") -> PcaModel:
    """Diagonalize Q (``covariance``) or rho_bar (``ensemble_density``) and keep
    the n leading eigenvectors."""
    if not 1 <= n <= ens.dim:
        raise NTooLarge(f"n={n} must lie in [1, {ens.dim}]")
    return model_from_spectrum(hermitian_eigendecompose(source_matrix(ens, source)), n, source)


def project(psi, model: PcaModel) -> np.ndarray:
    """Unnormalized projection onto the span of the model's components."""
    psi = np.asarray(psi)
    if psi.shape[-1] != model.dim:
        raise DimMismatch(f"state of dim {psi.shape[-1]} vs model dim {model.dim}")
    c = model.components
    return (psi @ c.conj()) @ c.T


def infidelity(psi, projected) -> float:
    """1 - |<projected|psi>|, without renormalizing the projection."""
    return float(1.0 - abs(np.vdot(projected, psi)))


def infidelities(states: np.ndarray, model: PcaModel, n: int | None = None) -> np.ndarray:
    """Per-datapoint infidelity using the first n components (all by default)."""
    c = model.components if n is None else model.components[:, :n]
    coeffs = states @ c.conj()
    # <P psi|psi> = sum_k |<chi_k|psi>|^2 for an orthonormal set
    return 1.0 - np.abs(np.einsum("ij,ij->i", coeffs.conj(), coeffs))


def nearest_rank(values, fraction: float) -> float:
    """ceil(fraction * N)-th order statistic (1-based)."""
    vals = np.sort(np.asarray(values, dtype=float))
    k = max(1, math.ceil(fraction * vals.size))
    return float(vals[k - 1])


@dataclass(frozen=True)
class CompressionCurve:
    n_values: np.ndarray
    median_infidelity: np.ndarray
    p90_infidelity: np.ndarray
    source: str = ""


def compression_curve(ens: PureStateEnsemble, model: PcaModel, n_values) -> CompressionCurve:
    n_values = np.asarray(list(n_values), dtype=int)
    if n_values.size and (n_values.min() < 1 or n_values.max() > model.n):
        raise NTooLarge(f"n values must lie in [1, {model.n}]")
    med, p90 = [], []
    for n in n_values:
        inf = infidelities(ens.states, model, int(n))
        med.append(float(np.median(inf)))
        p90.append(nearest_rank(inf, 0.9))
    return CompressionCurve(n_values, np.array(med), np.array(p90), model.source)


def overlap_report(model_q: PcaModel, model_r: PcaModel, shift: int = 1,
                   cluster_width: float | None = None) -> np.ndarray:
    """|<Q_(d-j)|R_(d-j-shift)>|^2 for j = 0, 1, ...

    With ``cluster_width`` set, each Q component is instead projected onto the
    whole eigenvalue cluster of R containing the paired component, which makes
    the overlap insensitive to the basis chosen inside degenerate eigenspaces.
    """
    if model_q.dim != model_r.dim:
        raise DimMismatch(f"models of dim {model_q.dim} and {model_r.dim}")
    if shift < 0:
        raise OutOfRange("shift must be non-negative")
    count = min(model_q.n, model_r.n - shift)
    if count <= 0:
        return np.zeros(0)
    amps = np.abs(model_q.components.conj().T @ model_r.components) ** 2
    if cluster_width is None:
        return np.array([amps[j, j + shift] for j in range(count)])
    # eigenvalues are descending in the model; clusters are computed ascending
    ascending = model_r.eigenvalues[::-1]
    member = np.empty(model_r.n, dtype=int)
    clusters = eigenvalue_clusters(ascending, cluster_width)
    for label, cl in enumerate(clusters):
        member[model_r.n - 1 - cl] = label
    out = []
    for j in range(count):
        label = member[j + shift]
        out.append(amps[j, member == label].sum())
    return np.array(out)


def default_shift(ens: PureStateEnsemble, tol: float = 1e-12) -> int:
    """1 for uncentered data (rho_bar has the extra mean component), 0 otherwise."""
    return 0 if np.linalg.norm(mean_vector(ens)) <= tol else 1
