"""Phase estimation: noon states, the covariant mini-max risk and aliasing.

The circular cost is ``c(u) = min_k (u + 2 pi k)^2`` with Fourier series
``pi^2/3 + sum_{m != 0} 2 (-1)^m / m^2 e^{imu}``.  For an input with Fourier
weights ``b_0..b_n`` and the covariant measurement, the uniform-prior Bayes risk
is ``b^T M b`` with ``M`` the Toeplitz matrix of those coefficients, so the
optimal risk is ``lambda_min(M)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, linalg

from . import kernels
from .errors import DegenerateError, ParameterError
from .report import MseEstimate, RiskReport, mse_from_errors

TWO_PI = 2 * math.pi
MAX_NOON = 20
MAX_COVARIANT = 5000
H_QUBIT = np.diag([0.5, -0.5])


def circular_cost(u):
    """``min_k (u + 2 pi k)^2``."""
    return kernels.sq_errors(np.asarray(u, dtype=float), 0.0, TWO_PI)


def cost_fourier_coefficients(m_max: int) -> np.ndarray:
    """Closed-form coefficients ``a_0..a_{m_max}`` of the circular cost."""
    m = np.arange(1, m_max + 1, dtype=float)
    return np.concatenate([[math.pi**2 / 3], 2 * (-1.0) ** m / m**2])


def quadrature_fourier_coefficients(m_max: int, method: str = "quad") -> np.ndarray:
    """Numerical coefficients ``(1/pi) int_0^pi u^2 cos(mu) du`` for checking the closed form.

    ``method="quad"`` uses adaptive oscillatory quadrature; ``"trapezoid"``
    uses the periodic trapezoid rule on ``2**16`` points.
    """
    if method == "quad":
        out = [integrate.quad(lambda u: u * u, 0, math.pi, epsabs=1e-14, epsrel=1e-13)[0] / math.pi]
        for m in range(1, m_max + 1):
            v = integrate.quad(lambda u: u * u, 0, math.pi, weight="cos", wvar=m, epsabs=1e-14, limit=200)[0]
            out.append(v / math.pi)
        return np.array(out)
    if method == "trapezoid":
        n = 2**16
        u = -math.pi + TWO_PI * np.arange(n) / n
        c = circular_cost(u)
        return np.array([float(np.mean(c * np.cos(m * u))) for m in range(m_max + 1)])
    raise ValueError(f"unknown method {method!r}")


# -- noon states --------------------------------------------------------------------

def _check_noon(n: int) -> None:
    if not 1 <= int(n) <= MAX_NOON:
        raise ParameterError(f"n must lie in [1, {MAX_NOON}], got {n}")


def noon_state(n: int) -> np.ndarray:
    """``(|0...0> + |1...1>)/sqrt(2)`` on ``(C^2)^n``."""
    _check_noon(n)
    v = np.zeros(2**n, dtype=np.complex128)
    v[0] = v[-1] = 1 / math.sqrt(2)
    return v


def total_hamiltonian(n: int, h=H_QUBIT) -> np.ndarray:
    """Diagonal of ``sum_j H^(j)`` for diagonal single-site ``H``."""
    diag = np.zeros(1)
    for _ in range(n):
        diag = (diag[:, None] + np.diag(h).real[None, :]).ravel()
    return diag


def noon_outcome_prob(n: int, theta):
    """Probability ``cos^2(n theta / 2)`` of the ``+`` parity outcome."""
    return np.cos(n * np.asarray(theta, dtype=float) / 2) ** 2


def noon_outcome_prob_born(n: int, theta: float) -> float:
    """Same probability from the rotated noon state and the projector onto ``(|0..0>+|1..1>)/sqrt 2``."""
    psi = np.exp(1j * theta * total_hamiltonian(n)) * noon_state(n)
    return float(abs(np.vdot(noon_state(n), psi)) ** 2)


def noon_classical_fisher(n: int, theta: float, tol: float = 1e-12) -> float:
    """Fisher information ``p'^2 / (p (1-p))`` of the binary noon measurement."""
    p = float(noon_outcome_prob(n, theta))
    if p * (1 - p) < tol:
        raise DegenerateError(f"outcome probability {p} is degenerate at theta={theta}")
    dp = -0.5 * n * math.sin(n * theta)
    return dp * dp / (p * (1 - p))


def noon_probability_curve(n: int, points: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """``(theta, cos^2(n theta/2))`` on a uniform grid over ``[0, 2 pi)``."""
    theta = TWO_PI * np.arange(points) / points
    return theta, noon_outcome_prob(n, theta)


# -- covariant mini-max risk --------------------------------------------------------

@dataclass(frozen=True)
class CovariantRiskResult:
    n: int
    risk: float
    amplitudes: np.ndarray

    @property
    def scaled(self) -> float:
        return self.n**2 * self.risk


@lru_cache(maxsize=64)
def _covariant(n: int) -> tuple[float, tuple]:
    m = linalg.toeplitz(cost_fourier_coefficients(n))
    w, v = linalg.eigh(m, subset_by_index=[0, 0])
    b = v[:, 0]
    if b.sum() < 0:
        b = -b
    return float(w[0]), tuple(b / np.linalg.norm(b))


def covariant_minimax_risk(n: int) -> CovariantRiskResult:
    """Optimal circular risk over covariant schemes using ``n`` phase rotations."""
    if not 0 <= int(n) <= MAX_COVARIANT:
        raise ParameterError(f"n must lie in [0, {MAX_COVARIANT}], got {n}")
    risk, b = _covariant(int(n))
    return CovariantRiskResult(int(n), risk, np.array(b))


def risk_table(ns) -> list[tuple[int, float, float]]:
    """Rows ``(n, risk, n^2 risk)``."""
    rows = []
    for n in ns:
        r = covariant_minimax_risk(n)
        rows.append((r.n, r.risk, r.scaled))
    return rows


def phase_bounds_report(n: int) -> RiskReport:
    if n < 1:
        raise ParameterError("n must be at least 1")
    r = covariant_minimax_risk(n)
    rep = RiskReport("phase_bounds")
    rep.add("n", n, "input")
    rep.add("cramer_rao", 1.0 / n**2, "1/J^S with J^S = n^2 for n rotations (noon input)")
    rep.add("covariant", r.risk, "lambda_min of the circular-cost Toeplitz matrix (finite-n value computed here)")
    rep.add("ratio", r.scaled, "n^2 * covariant risk; tends to pi^2")
    return rep


# -- aliasing -----------------------------------------------------------------------

@dataclass(frozen=True)
class Posterior:
    grid: np.ndarray
    probs: np.ndarray
    successes: int
    repeats: int


def ambiguity_posterior(n: int, k_repeats: int, theta_true: float, seed: int, grid_size: int = 4096) -> Posterior:
    """Normalized likelihood of ``k`` noon parity outcomes over a uniform grid on ``[0, 2 pi)``.

    With ``grid_size`` divisible by ``n`` the aliases ``+-theta + 2 pi j/n`` of
    every grid point are grid points, so alias peaks carry equal mass exactly.
    """
    if grid_size < 4 * n:
        raise ParameterError("grid_size must be at least 4n")
    grid = TWO_PI * np.arange(grid_size) / grid_size
    if k_repeats == 0:
        return Posterior(grid, np.full(grid_size, 1.0 / grid_size), 0, 0)
    p = float(noon_outcome_prob(n, theta_true))
    counts = kernels.sample_counts(kernels.cdf_from_probs([p, 1 - p]), seed, [0], k_repeats)[0]
    s = int(counts[0])
    q = np.clip(noon_outcome_prob(n, grid), 1e-300, 1.0)
    r = np.clip(1 - noon_outcome_prob(n, grid), 1e-300, 1.0)
    loglik = s * np.log(q) + (k_repeats - s) * np.log(r)
    w = np.exp(loglik - loglik.max())
    return Posterior(grid, w / w.sum(), s, k_repeats)


def alias_set(center: float, n: int) -> np.ndarray:
    """The ``2n`` points ``+-center + 2 pi j / n`` folded into ``[0, 2 pi)``."""
    j = np.arange(n)
    pts = np.concatenate([center + TWO_PI * j / n, -center + TWO_PI * j / n])
    return np.sort(np.mod(pts, TWO_PI))


def posterior_peaks(post: Posterior, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Locations and masses of the ``count`` largest local maxima.

    The mass of a peak is the posterior summed over its basin (between the
    neighbouring local minima on the circle).
    """
    p = post.probs
    left, right = np.roll(p, 1), np.roll(p, -1)
    maxima = np.flatnonzero((p > left) & (p >= right))
    minima = np.flatnonzero((p <= left) & (p < right))
    order = maxima[np.argsort(-p[maxima], kind="stable")][:count]
    size = p.size
    masses = []
    for i in order:
        if minima.size == 0:
            masses.append(1.0)
            continue
        lo = minima[minima < i].max() if np.any(minima < i) else minima.max() - size
        hi = minima[minima > i].min() if np.any(minima > i) else minima.min() + size
        idx = np.arange(lo + 1, hi) % size
        masses.append(float(p[idx].sum() + 0.5 * (p[lo % size] + p[hi % size])))
    return post.grid[order], np.array(masses)


# -- covariant estimator simulation ------------------------------------------------

def covariant_outcome_probs(b, theta: float, grid_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Outcomes ``theta_g = 2 pi g / G`` and ``p_g = |sum_k b_k e^{ik(theta - theta_g)}|^2 / G``.

    The elements ``|e_g><e_g| / G`` with ``e_g = sum_k e^{ik theta_g}|k>`` sum to
    the identity on the mode space whenever ``G > n``.
    """
    b = np.asarray(b, dtype=np.complex128)
    n = b.size - 1
    if grid_size < 8 * (n + 1):
        raise ParameterError(f"grid_size must be at least 8(n+1) = {8 * (n + 1)}")
    est = TWO_PI * np.arange(grid_size) / grid_size
    # amplitude at theta_g is the inverse DFT of the shifted weights
    shifted = np.zeros(grid_size, dtype=np.complex128)
    shifted[: n + 1] = b * np.exp(1j * np.arange(n + 1) * theta)
    amp = np.fft.fft(shifted)  # sum_k c_k e^{-2 pi i k g / G}
    p = np.abs(amp) ** 2 / grid_size
    return est, p / p.sum()


@dataclass(frozen=True)
class CovariantSimulation:
    estimate: MseEstimate
    risk: float
    discrete_risk: float
    allowance: float


def simulate_covariant_estimator(n: int, theta_true: float, trials: int, grid_size: int, seed: int,
                                 stream_offset: int = 0) -> CovariantSimulation:
    """Empirical circular MSE of the discretized optimal covariant scheme."""
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    res = covariant_minimax_risk(n)
    est, p = covariant_outcome_probs(res.amplitudes, theta_true, grid_size)
    idx = kernels.sample_categorical(kernels.cdf_from_probs(p), seed,
                                     np.arange(trials) + stream_offset, 1)[:, 0]
    sq = kernels.sq_errors(est[idx], theta_true, TWO_PI)
    discrete = float(p @ kernels.sq_errors(est, theta_true, TWO_PI))
    return CovariantSimulation(mse_from_errors(sq, theta_true, seed), res.risk, discrete, abs(discrete - res.risk))
