"""Variational state-diagonalization costs (VQSD and VQSE) evaluated on ensembles.

Three evaluation routes are provided for each cost: exact dense evaluation on
a density matrix, the deterministic expansion over the ensemble's datapoints,
and a Monte-Carlo estimate from i.i.d. dataset samples whose count follows the
Hoeffding prescription.

Randomness
----------
All sampling uses :func:`numpy.random.default_rng` (PCG64) seeded with a
single integer.  Within one sampled estimate the draw sequence is fixed:

* Without shots, when the ensemble is small enough that per-datapoint (VQSE,
  N <= M) or per-pair (VQSD, N^2 <= M) counts are cheaper than individual
  samples, one ``rng.multinomial(M, w)`` call draws the counts directly, with
  ``w = probs`` or ``w = outer(probs, probs).ravel()`` (pair (i, j) at flat
  index i*N + j).  This has the same law as M i.i.d. categorical draws.
* Otherwise: first-copy indices ``rng.choice(N, M, p=probs)``; (VQSD) the
  second-copy indices drawn the same way; then (shot mode) ``rng.random(M)``
  uniforms for each measurement, in the order swap test, first register,
  second register (VQSD) or register (VQSE).

The optimizer derives one 63-bit subseed per probe from a master generator
seeded with the run seed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import least_squares, minimize

from .dataset import PureStateEnsemble
from .errors import DimMismatch, NoImprovement, NotDensity, NotUnitary, OutOfRange
from .moments import ensemble_density
from .numkernel import as_matrix, hermitian_eigendecompose

UNITARY_TOL = 1e-10
DENSITY_TOL = 1e-10
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# operators


def dephase(rho) -> np.ndarray:
    """Zero the off-diagonal entries (dephasing in the standard basis)."""
    rho = as_matrix(rho)
    return np.diag(np.diag(rho))


def check_unitary(u, tol: float = UNITARY_TOL) -> np.ndarray:
    u = as_matrix(u)
    err = float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))
    if err > tol:
        raise NotUnitary(f"max |U^dagger U - I| = {err:.3e}")
    return u


def check_density(rho, tol: float = DENSITY_TOL) -> np.ndarray:
    rho = as_matrix(rho)
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise NotDensity("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise NotDensity(f"trace is {np.trace(rho)!r}, not 1")
    if hermitian_eigendecompose(rho).eigenvalues[0] < -tol:
        raise NotDensity("density matrix has a negative eigenvalue")
    return rho


@dataclass(frozen=True)
class VqseHamiltonian:
    """H = 1 - sum_i q_i |e_i><e_i| with q_1 > q_2 > ... > q_m > 0."""

    dim: int
    weights: tuple[float, ...]
    basis_indices: tuple[int, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        idx = tuple(int(i) for i in self.basis_indices)
        if not w or len(w) != len(idx):
            raise OutOfRange("need one basis index per weight and at least one level")
        if any(x <= 0 for x in w) or any(a <= b for a, b in zip(w, w[1:])):
            raise OutOfRange("weights must be positive and strictly decreasing")
        if len(set(idx)) != len(idx) or min(idx) < 0 or max(idx) >= self.dim:
            raise OutOfRange("basis indices must be distinct and inside the space")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "basis_indices", idx)

    @classmethod
    def standard(cls, dim: int, m: int) -> "VqseHamiltonian":
        """Targets the m largest eigenvalues on |0>, ..., |m-1> with q_i = (m - i + 1)/m."""
        if not 1 <= m <= dim:
            raise OutOfRange(f"m={m} must lie in [1, {dim}]")
        return cls(dim, tuple((m - i) / m for i in range(m)), tuple(range(m)))

    @property
    def m(self) -> int:
        return len(self.weights)

    def diagonal(self) -> np.ndarray:
        h = np.ones(self.dim)
        h[list(self.basis_indices)] -= self.weights
        return h

    def matrix(self) -> np.ndarray:
        return np.diag(self.diagonal())

    @property
    def norm_inf(self) -> float:
        return max(1.0, abs(1.0 - self.weights[0]))


# ---------------------------------------------------------------------------
# exact and deterministic evaluation


def _vqsd_from_diag(purity: float, diag: np.ndarray) -> float:
    return float(purity - np.sum(diag * diag))


def _rotated_diag(u: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return np.einsum("ij,jk,ik->i", u, rho, u.conj()).real


def vqsd_cost_exact(u, rho) -> float:
    """Tr(rho^2) - Tr(Z(U rho U^dagger)^2)."""
    u = check_unitary(u)
    rho = check_density(rho)
    if u.shape != rho.shape:
        raise DimMismatch("U and rho differ in dimension")
    purity = float(np.sum(np.abs(rho) ** 2))
    return _vqsd_from_diag(purity, _rotated_diag(u, rho))


def vqse_cost_exact(v, rho, ham: VqseHamiltonian) -> float:
    """Tr(V rho V^dagger H)."""
    v = check_unitary(v)
    rho = check_density(rho)
    if v.shape != rho.shape or ham.dim != rho.shape[0]:
        raise DimMismatch("V, rho and H differ in dimension")
    return float(ham.diagonal() @ _rotated_diag(v, rho))


def _basis_probabilities(states: np.ndarray, u: np.ndarray) -> np.ndarray:
    """|(U psi_i)_z|^2 for every datapoint (rows) and basis state (columns)."""
    return np.abs(states @ u.T) ** 2


def pair_values(ens: PureStateEnsemble, u) -> np.ndarray:
    """N x N matrix X_ij = |<psi_i|psi_j>|^2 - sum_z |(U psi_i)_z|^2 |(U psi_j)_z|^2."""
    u = check_unitary(u)
    gram = np.abs(ens.states.conj() @ ens.states.T) ** 2
    probs_z = _basis_probabilities(ens.states, u)
    return gram - probs_z @ probs_z.T


def vqsd_cost_deterministic(ens: PureStateEnsemble, u) -> float:
    """sum_ij p_i p_j X_ij: the N^2-term expansion of the VQSD cost on rho_bar."""
    return float(ens.probs @ pair_values(ens, u) @ ens.probs)


def vqse_cost_deterministic(ens: PureStateEnsemble, v, ham: VqseHamiltonian) -> float:
    """sum_i p_i <psi_i|V^dagger H V|psi_i>: the N-term expansion of the VQSE cost."""
    v = check_unitary(v)
    return float(ens.probs @ (_basis_probabilities(ens.states, v) @ ham.diagonal()))


# ---------------------------------------------------------------------------
# sampling


def _check_accuracy(epsilon: float, delta: float) -> None:
    if not epsilon > 0 or not math.isfinite(epsilon):
        raise OutOfRange(f"epsilon must be positive, got {epsilon!r}")
    if not 0 < delta < 1:
        raise OutOfRange(f"delta must lie in (0, 1), got {delta!r}")


def sample_count_vqsd(epsilon: float, delta: float) -> int:
    """ceil(9 ln(2/delta) / (2 epsilon^2)); samples live in [-2, 1]."""
    _check_accuracy(epsilon, delta)
    return max(1, math.ceil(9.0 * math.log(2.0 / delta) / (2.0 * epsilon * epsilon)))


def sample_count_vqse(epsilon: float, delta: float, h_norm: float) -> int:
    """ceil(2 ||H||^2 ln(2/delta) / epsilon^2), at least one sample."""
    _check_accuracy(epsilon, delta)
    if not h_norm >= 0:
        raise OutOfRange(f"h_norm must be non-negative, got {h_norm!r}")
    return max(1, math.ceil(2.0 * h_norm * h_norm * math.log(2.0 / delta) / (epsilon * epsilon)))


@dataclass(frozen=True)
class CostEstimate:
    value: float
    samples_used: int
    epsilon: float
    delta: float
    seed: int


def _categorical(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise inverse-CDF sampling: first index whose cumulative mass exceeds u."""
    return np.minimum((cdf <= u[:, None]).sum(axis=1), cdf.shape[1] - 1)


AGGREGATE_MAX_N = 2048


class _Draw:
    """One batch of i.i.d. dataset samples, replayable against any unitary.

    Without shots the draws are reduced to per-datapoint (or per-pair) counts
    when that is cheaper than touching every sample; the estimate is the same
    sample mean either way.
    """

    def __init__(self, ens: PureStateEnsemble, kind: str, m: int, rng: np.random.Generator, shots: bool):
        self.ens, self.kind, self.m, self.shots = ens, kind, m, shots
        n = ens.size
        self.counts = None
        self.i = self.j = None
        if kind == "vqsd":
            if not shots and n * n <= m and n <= AGGREGATE_MAX_N:
                # the pair counts of M i.i.d. draws are multinomial over p_i p_j
                self.counts = rng.multinomial(m, np.outer(ens.probs, ens.probs).ravel()).reshape(n, n)
                gram = np.abs(ens.states.conj() @ ens.states.T) ** 2
                self.swap_mean = float(np.sum(self.counts * gram) / m)
                return
            self.i = rng.choice(n, size=m, p=ens.probs)
            self.j = rng.choice(n, size=m, p=ens.probs)
            if shots:
                self.u_swap, self.u_a, self.u_b = rng.random(m), rng.random(m), rng.random(m)
            overlaps = np.einsum("ij,ij->i", ens.states[self.i].conj(), ens.states[self.j])
            self.swap = np.abs(overlaps) ** 2
        else:
            if not shots and n <= m:
                self.counts = rng.multinomial(m, ens.probs)
                return
            self.i = rng.choice(n, size=m, p=ens.probs)
            if shots:
                self.u_z = rng.random(m)

    def values(self, probs_z: np.ndarray, h_diag: np.ndarray | None = None) -> np.ndarray:
        """Per-sample values (not available in aggregated mode)."""
        if self.kind == "vqsd":
            if not self.shots:
                return self.swap - np.einsum("ij,ij->i", probs_z[self.i], probs_z[self.j])
            # one destructive swap-test shot (+1/-1) minus one DIP-test shot (0/1)
            sign = np.where(self.u_swap < 0.5 * (1.0 + self.swap), 1.0, -1.0)
            cdf = np.cumsum(probs_z, axis=1)
            same = _categorical(cdf[self.i], self.u_a) == _categorical(cdf[self.j], self.u_b)
            return sign - same.astype(float)
        if not self.shots:
            return probs_z[self.i] @ h_diag
        return h_diag[_categorical(np.cumsum(probs_z, axis=1)[self.i], self.u_z)]

    def mean(self, probs_z: np.ndarray, h_diag: np.ndarray | None = None) -> float:
        if self.counts is None:
            return float(self.values(probs_z, h_diag).mean())
        if self.kind == "vqsd":
            dip = np.einsum("ij,ik,jk->", self.counts, probs_z, probs_z)
            return float(self.swap_mean - dip / self.m)
        return float(self.counts @ (probs_z @ h_diag) / self.m)


def vqsd_cost_sampled(ens: PureStateEnsemble, u, epsilon: float, delta: float, seed: int,
                      *, shots: bool = False, samples: int | None = None) -> CostEstimate:
    """Average of M i.i.d. pair samples X_(i,j), (i, j) ~ p_i p_j.

    ``samples`` overrides the Hoeffding count; ``shots`` replaces each exact
    pair value by a single simulated measurement outcome.
    """
    m = sample_count_vqsd(epsilon, delta) if samples is None else int(samples)
    u = check_unitary(u)
    draw = _Draw(ens, "vqsd", m, np.random.default_rng(seed), shots)
    return CostEstimate(draw.mean(_basis_probabilities(ens.states, u)), m, epsilon, delta, seed)


def vqse_cost_sampled(ens: PureStateEnsemble, v, ham: VqseHamiltonian, epsilon: float, delta: float,
                      seed: int, *, shots: bool = False, samples: int | None = None) -> CostEstimate:
    """Average of M single-datapoint samples <psi_i|V^dagger H V|psi_i>, i ~ p_i."""
    m = sample_count_vqse(epsilon, delta, ham.norm_inf) if samples is None else int(samples)
    v = check_unitary(v)
    draw = _Draw(ens, "vqse", m, np.random.default_rng(seed), shots)
    return CostEstimate(draw.mean(_basis_probabilities(ens.states, v), ham.diagonal()), m, epsilon, delta, seed)


# ---------------------------------------------------------------------------
# ansatz


def givens(d: int, a: int, b: int, theta: float, phi: float) -> np.ndarray:
    """Two-level rotation [[cos, -e^{i phi} sin], [e^{-i phi} sin, cos]] on (a, b)."""
    g = np.eye(d, dtype=np.complex128)
    c, s = math.cos(theta), math.sin(theta)
    g[a, a] = c
    g[b, b] = c
    g[a, b] = -complex(math.cos(phi), math.sin(phi)) * s
    g[b, a] = complex(math.cos(phi), -math.sin(phi)) * s
    return g


@dataclass(frozen=True)
class RotationAnsatz:
    """Product of Givens rotations; the first pair in ``layout`` acts first.

    ``parameters`` has shape (len(layout), 2): rotation angle and phase.
    """

    dim: int
    layout: tuple[tuple[int, int], ...]
    parameters: np.ndarray

    def __post_init__(self):
        layout = tuple((int(a), int(b)) for a, b in self.layout)
        for a, b in layout:
            if not 0 <= a < b < self.dim:
                raise OutOfRange(f"invalid pair ({a}, {b}) for dim {self.dim}")
        params = np.array(self.parameters, dtype=np.float64).reshape(len(layout), 2)
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "parameters", params)

    @classmethod
    def full(cls, dim: int, layers: int = 1, parameters=None) -> "RotationAnsatz":
        """All pairs in lexicographic order, which can reach any unitary up to
        diagonal phases."""
        layout = [(a, b) for _ in range(layers) for a in range(dim) for b in range(a + 1, dim)]
        if parameters is None:
            parameters = np.zeros((len(layout), 2))
        return cls(dim, tuple(layout), parameters)

    def with_parameters(self, parameters) -> "RotationAnsatz":
        return replace(self, parameters=np.asarray(parameters, dtype=np.float64))

    def gates(self) -> list[np.ndarray]:
        return [givens(self.dim, a, b, t, f) for (a, b), (t, f) in zip(self.layout, self.parameters)]

    def matrix(self) -> np.ndarray:
        u = np.eye(self.dim, dtype=np.complex128)
        for g in self.gates():
            u = g @ u
        return u


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerConfig:
    max_sweeps: int = 400
    tolerance: float = 1e-13
    descent_sweeps: int = 2
    polish_iterations: int = 2000
    grid_points: int = 12
    golden_iterations: int = 40
    epsilon: float | None = None
    delta: float = 0.05
    seed: int = 0
    shots: bool = False
    initial_step: float = 0.4
    min_step: float = 1e-3
    restarts: int = 0
    vqse_levels: int | None = None

    @property
    def sampled(self) -> bool:
        return self.epsilon is not None


@dataclass
class OptimizationResult:
    ansatz: RotationAnsatz
    cost_trace: list[float]
    estimate_trace: list[float] = field(default_factory=list)
    converged: bool = False
    final_cost: float = math.nan
    initial_cost: float = math.nan
    eigenvalues: np.ndarray | None = None
    samples_per_evaluation: int = 0
    evaluations: int = 0

    @property
    def sweeps(self) -> int:
        return len(self.cost_trace) - 1


def _cost_fn(kind: str, rho: np.ndarray, ham: VqseHamiltonian | None) -> Callable[[np.ndarray], float]:
    if kind == "vqsd":
        purity = float(np.sum(np.abs(rho) ** 2))
        return lambda diag: purity - float(diag @ diag)
    h = ham.diagonal()
    return lambda diag: float(h @ diag)


def _golden_minimize(f, lo: float, hi: float, iterations: int) -> tuple[float, float]:
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iterations):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def _line_search(f, x0: float, f0: float, period: float, grid: int, iterations: int) -> tuple[float, float]:
    """Grid scan over one period around x0, then golden-section refinement of the
    best bracket.  Never returns a worse point than x0."""
    h = period / grid
    xs = x0 + h * np.arange(-(grid // 2), grid - grid // 2)
    fs = [f0 if x == x0 else f(x) for x in xs]
    k = int(np.argmin(fs))
    x, fx = _golden_minimize(f, xs[k] - h, xs[k] + h, iterations)
    if fs[k] < fx:
        x, fx = xs[k], fs[k]
    if fx < f0:
        return float(x), float(fx)
    return x0, f0


def _suffix_products(gates: list[np.ndarray]) -> list[np.ndarray]:
    d = gates[0].shape[0] if gates else 0
    out = [np.eye(d, dtype=np.complex128) for _ in gates]
    acc = np.eye(d, dtype=np.complex128)
    for k in range(len(gates) - 1, -1, -1):
        out[k] = acc
        acc = acc @ gates[k]
    return out


def _diag_grad(kind: str, ham: VqseHamiltonian | None):
    if kind == "vqsd":
        return lambda diag: -2.0 * diag
    h = ham.diagonal()
    return lambda diag: h


def _gate_derivatives(d: int, a: int, b: int, theta: float, phi: float) -> tuple[np.ndarray, np.ndarray]:
    c, s = math.cos(theta), math.sin(theta)
    e = complex(math.cos(phi), math.sin(phi))
    d_theta = np.zeros((d, d), dtype=np.complex128)
    d_theta[a, a] = d_theta[b, b] = -s
    d_theta[a, b] = -e * c
    d_theta[b, a] = e.conjugate() * c
    d_phi = np.zeros((d, d), dtype=np.complex128)
    d_phi[a, b] = -1j * e * s
    d_phi[b, a] = -1j * e.conjugate() * s
    return d_theta, d_phi


def cost_and_gradient(ansatz: RotationAnsatz, rho: np.ndarray, diag_cost, diag_grad) -> tuple[float, np.ndarray]:
    """Exact cost of ``diag(U rho U^dagger)`` and its analytic parameter gradient."""
    d = ansatz.dim
    gates = ansatz.gates()
    suffix = _suffix_products(gates)
    u = suffix[0] @ gates[0] if gates else np.eye(d)
    diag = _rotated_diag(u, rho)
    weight = diag_grad(diag)
    grad = np.zeros_like(ansatz.parameters)
    sigma = rho.astype(np.complex128)
    for k, ((a, b), (theta, phi)) in enumerate(zip(ansatz.layout, ansatz.parameters)):
        left = suffix[k]
        g = gates[k]
        # d cost = 2 Re Tr(dG . sigma G^dagger L^dagger W L)
        back = sigma @ g.conj().T @ (left.conj().T * weight) @ left
        d_theta, d_phi = _gate_derivatives(d, a, b, theta, phi)
        grad[k, 0] = 2.0 * np.sum(d_theta * back.T).real
        grad[k, 1] = 2.0 * np.sum(d_phi * back.T).real
        sigma = g @ sigma @ g.conj().T
    return diag_cost(diag), grad


def offdiagonal_residuals(ansatz: RotationAnsatz, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Real and imaginary parts of the strictly upper entries of U rho U^dagger,
    with their parameter Jacobian.

    The VQSD cost is twice the squared norm of this residual vector, which
    makes its minimization a zero-residual least-squares problem.
    """
    d = ansatz.dim
    gates = ansatz.gates()
    suffix = _suffix_products(gates)
    u = suffix[0] @ gates[0] if gates else np.eye(d, dtype=np.complex128)
    iu = np.triu_indices(d, 1)
    sigma_out = u @ rho @ u.conj().T
    res = np.concatenate([sigma_out[iu].real, sigma_out[iu].imag])
    jac = np.zeros((res.size, ansatz.parameters.size))
    sigma = rho.astype(np.complex128)
    for k, ((a, b), (theta, phi)) in enumerate(zip(ansatz.layout, ansatz.parameters)):
        left = suffix[k]
        g = gates[k]
        for col, dg in enumerate(_gate_derivatives(d, a, b, theta, phi)):
            half = left @ dg @ sigma @ g.conj().T @ left.conj().T
            deriv = (half + half.conj().T)[iu]
            jac[:, 2 * k + col] = np.concatenate([deriv.real, deriv.imag])
        sigma = g @ sigma @ g.conj().T
    return res, jac


def _exact_sweep(ansatz: RotationAnsatz, rho: np.ndarray, diag_cost, cfg: OptimizerConfig) -> tuple[np.ndarray, int]:
    params = ansatz.parameters.copy()
    d = ansatz.dim
    gates = ansatz.gates()
    suffix = _suffix_products(gates)
    sigma = rho.astype(np.complex128)
    evals = 0
    for k, (a, b) in enumerate(ansatz.layout):
        left = suffix[k]

        def cost(theta, phi):
            g = givens(d, a, b, theta, phi)
            w = left @ g
            return diag_cost(np.einsum("ij,jk,ik->i", w, sigma, w.conj()).real)

        theta, phi = params[k]
        f0 = cost(theta, phi)
        evals += 1
        theta, f0 = _line_search(lambda t: cost(t, phi), theta, f0, math.pi, cfg.grid_points, cfg.golden_iterations)
        phi, f0 = _line_search(lambda p: cost(theta, p), phi, f0, 2 * math.pi, cfg.grid_points, cfg.golden_iterations)
        evals += 2 * (cfg.grid_points + cfg.golden_iterations + 2)
        params[k] = theta, phi
        g = givens(d, a, b, theta, phi)
        sigma = g @ sigma @ g.conj().T
    return params, evals


def _sampled_sweep(ansatz: RotationAnsatz, draw_for, estimate, step: float,
                   master: np.random.Generator) -> tuple[np.ndarray, bool, int, float]:
    params = ansatz.parameters.copy()
    moved = False
    evals = 0
    last = math.nan
    for k in range(params.shape[0]):
        for col in range(2):
            # the three probes share one batch of samples
            draw = draw_for(int(master.integers(0, 2**63 - 1)))
            trial = params.copy()
            best_val = estimate(ansatz.with_parameters(trial), draw)
            best_x = params[k, col]
            for sgn in (1.0, -1.0):
                trial[k, col] = params[k, col] + sgn * step
                val = estimate(ansatz.with_parameters(trial), draw)
                if val < best_val:
                    best_val, best_x = val, trial[k, col]
            evals += 3
            if best_x != params[k, col]:
                params[k, col] = best_x
                moved = True
            last = best_val
    return params, moved, evals, last


def _polish(ansatz, rho, diag_cost, diag_grad, cfg, result) -> tuple[RotationAnsatz, bool]:
    """BFGS on the analytic gradient, one trace entry per iteration."""
    shape = ansatz.parameters.shape

    def fun(x):
        result.evaluations += 1
        c, g = cost_and_gradient(ansatz.with_parameters(x.reshape(shape)), rho, diag_cost, diag_grad)
        return c, g.ravel()

    def record(x):
        result.cost_trace.append(diag_cost(_rotated_diag(ansatz.with_parameters(x.reshape(shape)).matrix(), rho)))

    opt = minimize(fun, ansatz.parameters.ravel(), jac=True, method="BFGS", callback=record,
                   options={"gtol": 1e-12, "maxiter": cfg.polish_iterations})
    best = ansatz.with_parameters(opt.x.reshape(shape))
    final = diag_cost(_rotated_diag(best.matrix(), rho))
    if final > result.cost_trace[-1]:
        return ansatz, False
    if not result.cost_trace or result.cost_trace[-1] != final:
        result.cost_trace.append(final)
    return best, bool(opt.success) or final <= cfg.tolerance


def _polish_vqsd(ansatz, rho, diag_cost, cfg, result) -> tuple[RotationAnsatz, bool]:
    """Gauss-Newton style refinement on the off-diagonal residuals."""
    shape = ansatz.parameters.shape
    cache: dict[bytes, tuple[np.ndarray, np.ndarray]] = {}

    def evaluate(x):
        key = x.tobytes()
        if key not in cache:
            cache.clear()
            result.evaluations += 1
            cache[key] = offdiagonal_residuals(ansatz.with_parameters(x.reshape(shape)), rho)
        return cache[key]

    n_res = ansatz.dim * (ansatz.dim - 1)
    method = "lm" if n_res >= ansatz.parameters.size else "trf"
    opt = least_squares(lambda x: evaluate(x)[0], ansatz.parameters.ravel(), jac=lambda x: evaluate(x)[1],
                        method=method, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=cfg.polish_iterations)
    best = ansatz.with_parameters(opt.x.reshape(shape))
    final = diag_cost(_rotated_diag(best.matrix(), rho))
    if final > result.cost_trace[-1]:
        return ansatz, False
    result.cost_trace.append(final)
    return best, final <= cfg.tolerance or bool(opt.success)


def _rotated_eigenvalues(kind: str, ansatz: RotationAnsatz, rho: np.ndarray, ham) -> np.ndarray:
    diag = _rotated_diag(ansatz.matrix(), rho)
    if kind == "vqse":
        return diag[list(ham.basis_indices)]
    return np.sort(diag)[::-1]


def optimize_diagonalization(ens: PureStateEnsemble, cost: str = "vqsd", ansatz: RotationAnsatz | None = None,
                             config: OptimizerConfig | None = None,
                             hamiltonian: VqseHamiltonian | None = None) -> OptimizationResult:
    """Minimize the VQSD or VQSE cost of rho_bar over the ansatz parameters.

    Exact mode runs coordinate descent with a grid-plus-golden-section line
    search per parameter, then refines: VQSD as a least-squares problem on
    the off-diagonal entries of U rho_bar U^dagger (Levenberg-Marquardt),
    VQSE by BFGS on the analytic gradient.  Sampled mode (``config.epsilon`` set) moves each
    parameter by fixed +/- probes judged on Hoeffding-sized estimates that
    share one subseed per probe, halving the step after a sweep without moves.

    Recovered eigenvalues are the diagonal of U rho_bar U^dagger (sorted, for
    VQSD) or its entries on the Hamiltonian's target basis states (VQSE).
    """
    if cost not in ("vqsd", "vqse"):
        raise OutOfRange(f"unknown cost {cost!r}")
    cfg = config or OptimizerConfig()
    rho = ensemble_density(ens)
    ansatz = ansatz or RotationAnsatz.full(ens.dim)
    if ansatz.dim != ens.dim:
        raise DimMismatch("ansatz and ensemble differ in dimension")
    if cost == "vqse" and hamiltonian is None:
        hamiltonian = VqseHamiltonian.standard(ens.dim, cfg.vqse_levels or min(ens.dim, 3))
    diag_cost = _cost_fn(cost, rho, hamiltonian)

    def exact(a: RotationAnsatz) -> float:
        return diag_cost(_rotated_diag(a.matrix(), rho))

    starts = [ansatz]
    init_rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.restarts):
        starts.append(ansatz.with_parameters(init_rng.uniform(-math.pi, math.pi, ansatz.parameters.shape)))

    best: OptimizationResult | None = None
    for start in starts:
        result = _run(ens, cost, start, cfg, exact, diag_cost, rho, hamiltonian)
        if best is None or result.final_cost < best.final_cost:
            best = result
    if best.initial_cost > cfg.tolerance and best.final_cost >= best.initial_cost:
        warnings.warn(f"no improvement over initial cost {best.initial_cost:.3e}", NoImprovement, stacklevel=2)
    best.eigenvalues = _rotated_eigenvalues(cost, best.ansatz, rho, hamiltonian)
    return best


def _run(ens, cost, ansatz, cfg, exact, diag_cost, rho, ham) -> OptimizationResult:
    c0 = exact(ansatz)
    result = OptimizationResult(ansatz=ansatz, cost_trace=[c0], initial_cost=c0, final_cost=c0)
    # VQSE has no zero-cost optimum; only VQSD can stop on the absolute target
    if cost == "vqsd" and c0 <= cfg.tolerance:
        result.converged = True
        return result

    if not cfg.sampled:
        reached = False
        for _ in range(min(cfg.descent_sweeps, cfg.max_sweeps)):
            params, evals = _exact_sweep(ansatz, rho, diag_cost, cfg)
            ansatz = ansatz.with_parameters(params)
            result.evaluations += evals
            c = exact(ansatz)
            result.cost_trace.append(c)
            if cost == "vqsd" and c <= cfg.tolerance:
                reached = True
                break
        if not reached and cfg.polish_iterations > 0:
            if cost == "vqsd":
                ansatz, reached = _polish_vqsd(ansatz, rho, diag_cost, cfg, result)
            else:
                ansatz, reached = _polish(ansatz, rho, diag_cost, _diag_grad(cost, ham), cfg, result)
        result.converged = reached
    else:
        m_samples = (sample_count_vqsd(cfg.epsilon, cfg.delta) if cost == "vqsd"
                     else sample_count_vqse(cfg.epsilon, cfg.delta, ham.norm_inf))
        result.samples_per_evaluation = m_samples
        h_diag = None if ham is None else ham.diagonal()

        def draw_for(seed: int) -> _Draw:
            return _Draw(ens, cost, m_samples, np.random.default_rng(seed), cfg.shots)

        def estimate(a: RotationAnsatz, draw: _Draw) -> float:
            return draw.mean(_basis_probabilities(ens.states, a.matrix()), h_diag)

        master = np.random.default_rng(cfg.seed)
        step = cfg.initial_step
        for _ in range(cfg.max_sweeps):
            params, moved, evals, est = _sampled_sweep(ansatz, draw_for, estimate, step, master)
            ansatz = ansatz.with_parameters(params)
            result.evaluations += evals
            result.cost_trace.append(exact(ansatz))
            result.estimate_trace.append(est)
            if not moved:
                step /= 2.0
                if step < cfg.min_step:
                    result.converged = True
                    break
    result.ansatz = ansatz
    result.final_cost = result.cost_trace[-1]
    return result


def top_eigenvalue_error(result: OptimizationResult, rho, k: int) -> float:
    """Largest |recovered - exact| over the k leading eigenvalues of rho."""
    exact = hermitian_eigendecompose(rho).eigenvalues[::-1][:k]
    return float(np.max(np.abs(np.asarray(result.eigenvalues[:k]) - exact)))
