"""Dense complex linear algebra and a cyclic Jacobi Hermitian eigensolver.

Vectors and matrices are plain :class:`numpy.ndarray` objects of dtype
``complex128`` (or ``float64`` where the data is real).  Every function here
is pure: inputs are never modified in place.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimMismatch, NoConvergence, NotHermitian

HERMITIAN_RTOL = 1e-10
OFF_DIAGONAL_RTOL = 1e-14
MAX_SWEEPS = 100


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs of a Hermitian matrix.

    ``eigenvalues`` are ascending; column ``j`` of ``eigenvectors`` belongs to
    ``eigenvalues[j]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T

    def descending(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues and eigenvectors ordered largest first."""
        return self.eigenvalues[::-1].copy(), self.eigenvectors[:, ::-1].copy()


def as_vector(x) -> np.ndarray:
    v = np.asarray(x)
    if v.ndim != 1 or v.size == 0:
        raise DimMismatch(f"expected a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise DimMismatch(f"expected a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.asarray(a)).T


def inner(x, y) -> complex:
    """<x|y>, conjugate-linear in ``x``."""
    x, y = as_vector(x), as_vector(y)
    if x.shape != y.shape:
        raise DimMismatch(f"inner product of dims {x.size} and {y.size}")
    return complex(np.vdot(x, y))


def outer(x, y=None) -> np.ndarray:
    """|x><y|; with one argument this is the outer-product map |x><x|."""
    x = as_vector(x)
    y = x if y is None else as_vector(y)
    return np.outer(x, np.conj(y))


def matmul(a, b) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape[-1] != b.shape[0]:
        raise DimMismatch(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def trace(a) -> complex:
    return complex(np.trace(as_matrix(a)))


def frobenius_norm(a) -> float:
    return float(np.linalg.norm(np.asarray(a), "fro"))


def frobenius_distance(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise DimMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def hermitian_defect(a) -> float:
    """||A - A^dagger||_F relative to max(1, ||A||_F)."""
    a = as_matrix(a)
    return frobenius_distance(a, dagger(a)) / max(1.0, frobenius_norm(a))


def is_hermitian(a, rtol: float = HERMITIAN_RTOL) -> bool:
    return hermitian_defect(a) <= rtol


def hermitian_part(a, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Return (A + A^dagger)/2, refusing inputs that are not Hermitian to ``rtol``."""
    a = as_matrix(a)
    defect = hermitian_defect(a)
    if defect > rtol:
        raise NotHermitian(f"||A - A^dagger||_F / max(1, ||A||_F) = {defect:.3e} > {rtol:.1e}")
    h = 0.5 * (a + dagger(a))
    if np.iscomplexobj(h) and not np.any(h.imag):
        h = h.real.copy()
    return h


@lru_cache(maxsize=64)
def _round_robin(d: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    # Circle-method tournament: every index pair appears exactly once per sweep
    # and the pairs of one round are disjoint.
    m = d + (d % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for k in range(m // 2):
            a, b = players[k], players[m - 1 - k]
            if a < d and b < d:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1], *players[1:-1]]
    return tuple(rounds)


def _off_norm(a: np.ndarray) -> float:
    off = a.copy()
    np.fill_diagonal(off, 0)
    return float(np.linalg.norm(off))


def _jacobi_round(a: np.ndarray, v: np.ndarray, p: np.ndarray, q: np.ndarray) -> None:
    app = a[p, p].real
    aqq = a[q, q].real
    apq = a[p, q]
    mag = np.abs(apq)
    active = mag > 0.0
    safe = np.where(active, mag, 1.0)
    # a vanishing off-diagonal entry sends tau to infinity and t to zero, as it should
    with np.errstate(over="ignore"):
        tau = (aqq - app) / (2.0 * safe)
        t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
    t = np.where(active, t, 0.0)
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c
    phase = np.where(active, apq / safe, 1.0)
    # V = [[c, s e^{i phi}], [-s e^{-i phi}, c]] on each (p, q) plane.
    vpq = s * phase
    vqp = -s * np.conj(phase)

    for m in (a, v):
        cp = m[:, p]
        cq = m[:, q]
        m[:, p] = cp * c + cq * vqp
        m[:, q] = cp * vpq + cq * c
    rp = a[p, :]
    rq = a[q, :]
    a[p, :] = c[:, None] * rp + np.conj(vqp)[:, None] * rq
    a[q, :] = np.conj(vpq)[:, None] * rp + c[:, None] * rq

    a[p, p] = app - t * mag
    a[q, q] = aqq + t * mag
    a[p, q] = 0.0
    a[q, p] = 0.0


def hermitian_eigendecompose(a, max_sweeps: int = MAX_SWEEPS) -> SpectralDecomposition:
    """Diagonalize a Hermitian matrix with cyclic complex Jacobi rotations.

    Sweeps visit every off-diagonal pair once in round-robin order, so the
    disjoint rotations of one round are applied together.  Iteration stops once
    the off-diagonal Frobenius norm drops to ``1e-14 * ||A||_F``.

    Raises:
        NotHermitian: ``||A - A^dagger||_F > 1e-10 * max(1, ||A||_F)``.
        NoConvergence: the sweep cap was hit first.
    """
    h = hermitian_part(a)
    d = h.shape[0]
    work = np.array(h, dtype=np.float64 if np.isrealobj(h) else np.complex128)
    vecs = np.eye(d, dtype=work.dtype)
    scale = frobenius_norm(work)
    threshold = OFF_DIAGONAL_RTOL * scale

    sweeps = 0
    if d > 1 and scale > 0.0:
        rounds = _round_robin(d)
        while _off_norm(work) > threshold:
            if sweeps >= max_sweeps:
                raise NoConvergence(f"Jacobi did not converge within {max_sweeps} sweeps (d={d})")
            for p, q in rounds:
                _jacobi_round(work, vecs, p, q)
            sweeps += 1

    evals = np.real(np.diag(work)).astype(np.float64)
    order = np.argsort(evals, kind="stable")
    return SpectralDecomposition(
        eigenvalues=evals[order],
        eigenvectors=vecs[:, order].astype(np.complex128),
        sweeps=sweeps,
    )


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    """(G + G^dagger)/2 with G i.i.d. standard complex normal entries."""
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return 0.5 * (g + g.conj().T)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    return q * (diag / np.abs(diag))
