"""Spectral relations between rho_bar, the covariance Q and the rank-one M.

Eigenvalue lists are ascending throughout (index 0 is the smallest), so the
j-th principal component sits at index ``d - j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dataset import PureStateEnsemble
from .errors import LengthMismatch, NotNormalized, NotSorted, OutOfRange, ZeroMean
from .moments import mean_direction, moments
from .numkernel import SpectralDecomposition, as_matrix, as_vector, hermitian_eigendecompose, hermitian_part

NORM_TOL = 1e-10
CLUSTER_WIDTH = 1e-9
COLINEAR_THRESHOLD = 1.0 - 1e-6


def default_tolerance(*spectra) -> float:
    """1e-10 * max(1, spectral range) over all given eigenvalue lists."""
    values = np.concatenate([np.asarray(s, dtype=float).ravel() for s in spectra])
    span = float(values.max() - values.min()) if values.size else 0.0
    return 1e-10 * max(1.0, span)


def _check_pair(upper, lower) -> tuple[np.ndarray, np.ndarray]:
    upper = np.asarray(upper, dtype=float)
    lower = np.asarray(lower, dtype=float)
    if upper.shape != lower.shape or upper.ndim != 1:
        raise LengthMismatch(f"eigenvalue lists of shapes {upper.shape} and {lower.shape}")
    for name, vals in (("upper", upper), ("lower", lower)):
        if np.any(np.diff(vals) < 0):
            raise NotSorted(f"{name} eigenvalues are not in non-decreasing order")
    return upper, lower


def _check_unit(psi, what="state") -> np.ndarray:
    psi = as_vector(psi)
    norm = float(np.linalg.norm(psi))
    if abs(norm - 1.0) > NORM_TOL:
        raise NotNormalized(f"{what} has norm {norm!r}")
    return psi


def eigenvalue_clusters(evals, width: float = CLUSTER_WIDTH) -> list[np.ndarray]:
    """Group sorted eigenvalues into runs whose neighbours differ by <= width."""
    evals = np.asarray(evals)
    if evals.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(evals) > width) + 1
    return np.split(np.arange(evals.size), breaks)


@dataclass(frozen=True)
class InterlacingReport:
    upper: np.ndarray
    lower: np.ndarray
    satisfied: bool
    max_violation: float
    per_index_gaps: np.ndarray
    tolerance: float


def interlacing_check(upper, lower, tol: float | None = None) -> InterlacingReport:
    """Check upper_d >= lower_d >= upper_(d-1) >= ... >= upper_1 >= lower_1."""
    upper, lower = _check_pair(upper, lower)
    if tol is None:
        tol = default_tolerance(upper, lower)
    gaps = upper - lower
    violation = np.max(-gaps, initial=0.0)
    if upper.size > 1:
        violation = max(violation, float(np.max(upper[:-1] - lower[1:])))
    violation = max(0.0, float(violation))
    return InterlacingReport(upper, lower, violation <= tol, violation, gaps, tol)


def gap_bound_violation(r, q, mean_norm_sq: float) -> float:
    """Worst violation of q_j <= r_j <= q_j + ||mu||^2 and
    r_j - q_j <= min(||mu||^2, q_(j+1) - q_j)."""
    r, q = _check_pair(r, q)
    if mean_norm_sq < 0:
        raise OutOfRange("mean_norm_sq must be non-negative")
    delta = r - q
    cap = np.full_like(delta, mean_norm_sq)
    cap[:-1] = np.minimum(cap[:-1], q[1:] - q[:-1])
    worst = max(float(np.max(-delta)), float(np.max(delta - cap)))
    return max(0.0, worst)


def eigenvalue_gap_bound_check(r, q, mean_norm_sq: float, tol: float | None = None) -> bool:
    if tol is None:
        tol = default_tolerance(r, q)
    return gap_bound_violation(r, q, mean_norm_sq) <= tol


def eigenvector_error_direct(a, psi) -> float:
    """||A psi - <psi|A|psi> psi||^2, zero exactly when psi is an eigenvector."""
    a = as_matrix(a)
    psi = _check_unit(psi)
    a_psi = a @ psi
    delta = a_psi - np.vdot(psi, a_psi) * psi
    return float(np.vdot(delta, delta).real)


def eigenvector_error_closed_form(mean_norm_sq: float, overlap_sq: float) -> float:
    """||mu||^4 s (1 - s) with s the squared overlap with the mean direction."""
    if mean_norm_sq < 0:
        raise OutOfRange("mean_norm_sq must be non-negative")
    if not -1e-12 <= overlap_sq <= 1.0 + 1e-12:
        raise OutOfRange(f"overlap_sq {overlap_sq!r} outside [0, 1]")
    s = min(max(overlap_sq, 0.0), 1.0)
    return mean_norm_sq * mean_norm_sq * s * (1.0 - s)


@dataclass(frozen=True)
class EigenvectorErrorReport:
    direct_error: float
    closed_form_error: float
    overlap_with_mean: float


def eigenvector_error_report(a, psi, mu) -> EigenvectorErrorReport:
    norm_sq, v_mu = mean_direction(mu)
    s = 0.0 if v_mu is None else float(abs(np.vdot(v_mu, psi)) ** 2)
    return EigenvectorErrorReport(
        eigenvector_error_direct(a, psi),
        eigenvector_error_closed_form(norm_sq, s),
        s,
    )


@dataclass(frozen=True)
class EigenvectorErrorTable:
    """Eigenvector errors for every eigenvector of Q under rho_bar and vice versa.

    Arrays are indexed like the ascending spectra.
    """

    q_in_rho_direct: np.ndarray
    q_in_rho_closed: np.ndarray
    r_in_q_direct: np.ndarray
    r_in_q_closed: np.ndarray
    q_overlaps: np.ndarray
    r_overlaps: np.ndarray

    def max_discrepancy(self) -> float:
        return float(max(
            np.max(np.abs(self.q_in_rho_direct - self.q_in_rho_closed)),
            np.max(np.abs(self.r_in_q_direct - self.r_in_q_closed)),
        ))


def _direct_errors(a: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    av = a @ vecs
    rayleigh = np.einsum("ij,ij->j", vecs.conj(), av)
    delta = av - vecs * rayleigh
    return np.einsum("ij,ij->j", delta.conj(), delta).real


def eigenvector_error_table(ens: PureStateEnsemble, q_spec: SpectralDecomposition | None = None,
                            r_spec: SpectralDecomposition | None = None) -> EigenvectorErrorTable:
    m = moments(ens)
    q_spec = q_spec or hermitian_eigendecompose(m.covariance)
    r_spec = r_spec or hermitian_eigendecompose(m.ensemble_density)
    norm_sq, v_mu = mean_direction(m.mean)
    d = ens.dim
    if v_mu is None:
        q_ov = r_ov = np.zeros(d)
    else:
        q_ov = np.abs(v_mu.conj() @ q_spec.eigenvectors) ** 2
        r_ov = np.abs(v_mu.conj() @ r_spec.eigenvectors) ** 2
    q_ov, r_ov = np.clip(q_ov, 0.0, 1.0), np.clip(r_ov, 0.0, 1.0)
    return EigenvectorErrorTable(
        q_in_rho_direct=_direct_errors(m.ensemble_density, q_spec.eigenvectors),
        q_in_rho_closed=norm_sq**2 * q_ov * (1.0 - q_ov),
        r_in_q_direct=_direct_errors(m.covariance, r_spec.eigenvectors),
        r_in_q_closed=norm_sq**2 * r_ov * (1.0 - r_ov),
        q_overlaps=q_ov,
        r_overlaps=r_ov,
    )


@dataclass(frozen=True)
class SharedSpectrumReport:
    """Outcome of testing whether rho_bar and Q share their eigenbasis.

    ``applies`` says the mean direction is (numerically) an eigenvector of
    rho_bar; only then are ``shift_error``, ``residual_mismatch`` and ``holds``
    meaningful.
    """

    mean_norm_sq: float
    overlap: float
    matched_index: int
    applies: bool
    shift_error: float
    residual_mismatch: float
    holds: bool


def shared_spectrum_check(ens: PureStateEnsemble, tol: float = 1e-10,
                          overlap_threshold: float = COLINEAR_THRESHOLD,
                          cluster_width: float = CLUSTER_WIDTH) -> SharedSpectrumReport:
    """Locate the eigenvector of rho_bar closest to the mean direction and, if it
    is colinear within ``overlap_threshold``, compare the remaining spectra.

    Overlap is measured against whole eigenvalue clusters so a degenerate
    eigenspace containing the mean direction still counts as colinear.
    """
    m = moments(ens)
    norm_sq, v_mu = mean_direction(m.mean)
    if v_mu is None or norm_sq <= 1e-300:
        raise ZeroMean("the ensemble is centered; the mean direction is undefined")
    r_spec = hermitian_eigendecompose(m.ensemble_density)
    q_vals = hermitian_eigendecompose(m.covariance).eigenvalues
    r_vals = r_spec.eigenvalues
    per_vec = np.abs(v_mu.conj() @ r_spec.eigenvectors) ** 2

    best_overlap, best = -1.0, None
    for cluster in eigenvalue_clusters(r_vals, cluster_width):
        ov = float(per_vec[cluster].sum())
        if ov > best_overlap:
            best_overlap, best = ov, cluster
    matched = int(best[np.argmax(per_vec[best])])
    applies = best_overlap >= overlap_threshold
    if not applies:
        return SharedSpectrumReport(norm_sq, best_overlap, matched, False, np.nan, np.nan, False)

    r_match = r_vals[matched]
    q_target = r_match - norm_sq
    q_match = int(np.argmin(np.abs(q_vals - q_target)))
    shift_error = abs(r_match - q_vals[q_match] - norm_sq)
    rest_r = np.delete(r_vals, matched)
    rest_q = np.delete(q_vals, q_match)
    mismatch = float(np.max(np.abs(rest_r - rest_q), initial=0.0))
    holds = shift_error <= tol and mismatch <= tol
    return SharedSpectrumReport(norm_sq, best_overlap, matched, True, float(shift_error), mismatch, holds)


class DiagonalRelation(NamedTuple):
    r_phi: float
    q_phi: float
    residual: float


def diagonal_relation(ens: PureStateEnsemble, phi) -> DiagonalRelation:
    """Return <phi|rho_bar|phi>, <phi|Q|phi> and the residual of
    r_phi = q_phi + ||mu||^2 |<v_mu|phi>|^2."""
    phi = _check_unit(phi, "phi")
    m = moments(ens)
    r_phi = float(np.vdot(phi, m.ensemble_density @ phi).real)
    q_phi = float(np.vdot(phi, m.covariance @ phi).real)
    projection = float(abs(np.vdot(m.mean, phi)) ** 2)  # ||mu||^2 |<v_mu|phi>|^2
    return DiagonalRelation(r_phi, q_phi, abs(r_phi - q_phi - projection))


def weyl_rank_one_violation(a, b_eigenvalue: float, b_vector) -> float:
    """Worst violation of the rank-one Weyl chains for A and A + lambda_B |b><b|."""
    a = hermitian_part(a)
    if b_eigenvalue <= 0:
        raise OutOfRange("b_eigenvalue must be positive")
    b_vector = _check_unit(b_vector, "b_vector")
    lam_a = hermitian_eigendecompose(a).eigenvalues
    lam_ab = hermitian_eigendecompose(a + b_eigenvalue * np.outer(b_vector, b_vector.conj())).eigenvalues
    worst = max(
        float(np.max(lam_ab - lam_a - b_eigenvalue)),
        float(np.max(lam_ab[:-1] - lam_a[1:], initial=-np.inf)),
        float(np.max(lam_a - lam_ab)),
    )
    return max(0.0, worst)


def weyl_rank_one_check(a, b_eigenvalue: float, b_vector, tol: float | None = None) -> bool:
    if tol is None:
        tol = 1e-10 * max(1.0, float(np.abs(a).max()) * len(a) + b_eigenvalue)
    return weyl_rank_one_violation(a, b_eigenvalue, b_vector) <= tol


def weyl_general_violation(a, b) -> float:
    """Worst violation over every (j, k) of both general Weyl chains:

    lam_j(A+B) <= lam_(j+k)(A) + lam_(d-k)(B)      for k = 0..d-j
    lam_(j-k+1)(A) + lam_k(B) <= lam_j(A+B)        for k = 1..j

    (1-based indices, ascending order.)
    """
    a, b = hermitian_part(a), hermitian_part(b)
    if a.shape != b.shape:
        raise LengthMismatch("A and B differ in dimension")
    la = hermitian_eigendecompose(a).eigenvalues
    lb = hermitian_eigendecompose(b).eigenvalues
    lab = hermitian_eigendecompose(a + b).eigenvalues
    d = la.size
    worst = -np.inf
    for j in range(1, d + 1):
        for k in range(0, d - j + 1):
            worst = max(worst, lab[j - 1] - la[j + k - 1] - lb[d - k - 1])
        for k in range(1, j + 1):
            worst = max(worst, la[j - k] + lb[k - 1] - lab[j - 1])
    return max(0.0, float(worst))


def weyl_general_check(a, b, tol: float | None = None) -> bool:
    if tol is None:
        tol = 1e-10 * max(1.0, float(np.abs(a).max() + np.abs(b).max()) * len(a))
    return weyl_general_violation(a, b) <= tol
