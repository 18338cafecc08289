import numpy as np
import pytest

from covprep.dataset import MixedStateEnsemble, PureStateEnsemble

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def random_states(rng, n, d, real=False):
    z = rng.standard_normal((n, d))
    if not real:
        z = z + 1j * rng.standard_normal((n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def random_ensemble(rng, n, d, uniform=False, real=False, offset=0.0):
    """Random pure-state ensemble; ``offset`` adds a common direction so the
    data is clearly uncentered."""
    z = rng.standard_normal((n, d)) + (0 if real else 1j * rng.standard_normal((n, d)))
    z = z + offset
    states = z / np.linalg.norm(z, axis=1, keepdims=True)
    probs = np.full(n, 1.0 / n) if uniform else rng.dirichlet(np.ones(n))
    return PureStateEnsemble(states, probs)


def mean_eigenvector_ensemble(rng, d, spread_dirs=3, mean_amp=0.6):
    """Ensemble whose normalized mean is an exact null vector of Q.

    States are m*u + sqrt(1 - m^2) * omega^l * w_k with w_k orthogonal to u and
    omega the cube roots of unity, so the fluctuations cancel exactly.
    """
    u = random_states(rng, 1, d)[0]
    basis = np.linalg.qr(np.column_stack([u, rng.standard_normal((d, d - 1)) + 1j * rng.standard_normal((d, d - 1))]))[0]
    perp = basis[:, 1:]
    u = basis[:, 0]
    states, probs = [], []
    weights = rng.dirichlet(np.ones(spread_dirs))
    for k in range(spread_dirs):
        w = perp @ (rng.standard_normal(d - 1) + 1j * rng.standard_normal(d - 1))
        w /= np.linalg.norm(w)
        for ell in range(3):
            states.append(mean_amp * u + np.sqrt(1 - mean_amp**2) * np.exp(2j * np.pi * ell / 3) * w)
            probs.append(weights[k] / 3)
    return PureStateEnsemble(np.array(states), np.array(probs)), u


def random_mixed(rng, n, d, max_rank):
    """Mixed ensemble of random density matrices of rank at most ``max_rank``."""
    rhos = []
    for _ in range(n):
        r = int(rng.integers(1, max_rank + 1))
        g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
        rho = g @ g.conj().T
        rhos.append(rho / np.trace(rho).real)
    return MixedStateEnsemble(np.array(rhos), rng.dirichlet(np.ones(n)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
