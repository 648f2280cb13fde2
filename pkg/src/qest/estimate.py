"""Monte Carlo simulation of estimation strategies.

Every random draw comes from the counter-based generator in
:mod:`qest.kernels`: trial ``t`` reads stream ``t`` (shifted by a caller
offset) under the master seed, so results do not depend on how trials are
batched or threaded.  The two-step estimator uses stream ``4 r + s`` for
replica ``r`` and stage ``s``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import numpy as np
from scipy import stats

from . import kernels
from .channel import ChannelFamily, channel_output, tensor_power
from .errors import DegenerateError, DimensionError, ParameterError, ValidationError
from .fisher import StateFamilyPoint, sld
from .linalg import as_cmatrix, hermitize
from .phase import TWO_PI, covariant_minimax_risk, covariant_outcome_probs
from .report import MseEstimate, mse_from_errors

log = logging.getLogger(__name__)

POVM_TOL = 1e-8
NEG_FLOOR = -1e-10


# -- estimators -----------------------------------------------------------------

class Estimator:
    """Outcome distribution plus a real estimate per outcome.

    Subclasses implement :meth:`probabilities`; ``copies`` is the number of
    channel uses one run consumes and ``period`` (if set) marks circular
    estimates.
    """

    labels: np.ndarray
    copies: int = 1
    period: Optional[float] = None

    def probabilities(self, family: Optional[ChannelFamily], theta: float) -> np.ndarray:
        raise NotImplementedError


class QuantumEstimator(Estimator):
    """Input state on ``(H (x) R)^n`` and a POVM on the output ``(K (x) R)^n``.

    The input is either a matrix ``a`` (the pure state ``|A>>``, rows on the
    channel input) or an explicit ``density``.
    """

    def __init__(self, povm, labels, a=None, density=None, copies: int = 1, period: Optional[float] = None):
        if (a is None) == (density is None):
            raise ValueError("give exactly one of a and density")
        self.povm = np.array([hermitize(m, 1e-10, "POVM element") for m in povm])
        dim = self.povm.shape[1]
        if np.max(np.abs(self.povm.sum(axis=0) - np.eye(dim))) > POVM_TOL:
            raise ValidationError("POVM elements do not sum to the identity")
        for m in self.povm:
            if np.linalg.eigvalsh(m)[0] < NEG_FLOOR:
                raise ValidationError("POVM element is not positive semidefinite")
        self.labels = np.asarray(labels, dtype=float)
        if self.labels.shape != (len(self.povm),) or not np.all(np.isfinite(self.labels)):
            raise ValidationError("need one finite label per POVM element")
        if a is not None:
            a = as_cmatrix(a, "a")
            if abs(np.linalg.norm(a) - 1.0) > 1e-9:
                raise ValidationError("input |A>> must have unit norm")
            v = a.reshape(-1, 1)
            self.state = v @ v.conj().T
        else:
            self.state = hermitize(density, 1e-10, "density")
        self.copies = int(copies)
        self.period = period
        self._family_cache: dict = {}

    def _family(self, f: ChannelFamily) -> ChannelFamily:
        if self.copies == 1:
            return f
        key = id(f)
        if key not in self._family_cache:
            self._family_cache[key] = (f, tensor_power(f, self.copies))
        return self._family_cache[key][1]

    def output(self, f: ChannelFamily, theta: float, derivative: bool = False) -> np.ndarray:
        return channel_output(self._family(f), theta, self.state, derivative)

    def probabilities(self, family, theta):
        out = self.output(family, theta)
        if out.shape[0] != self.povm.shape[1]:
            raise DimensionError(f"output dimension {out.shape[0]} does not match POVM dimension {self.povm.shape[1]}")
        return np.einsum("ij,kji->k", out, self.povm).real


class NoonRepetitionEstimator(Estimator):
    """``k`` independent noon-state parity measurements on ``n`` rotations each.

    Outcome ``j`` means ``k - j`` parity successes; its estimate inverts the
    success frequency, ``(2/n) arccos(sqrt(s/k))`` in ``[0, pi/n]``.
    """

    period = TWO_PI

    def __init__(self, n: int, k: int = 1):
        if n < 1 or k < 1:
            raise ParameterError("n and k must be positive")
        self.n, self.k = int(n), int(k)
        s = np.arange(k, -1, -1)
        self._successes = s
        self.labels = (2.0 / n) * np.arccos(np.sqrt(s / k))
        self.copies = self.n * self.k

    def probabilities(self, family, theta):
        p = math.cos(self.n * theta / 2) ** 2
        return stats.binom.pmf(self._successes, self.k, p)


class CovariantPhaseEstimator(Estimator):
    """The optimal covariant scheme on ``n`` rotations, discretized to ``grid_size`` outcomes."""

    period = TWO_PI

    def __init__(self, n: int, grid_size: Optional[int] = None):
        self.n = int(n)
        self.copies = self.n
        self.grid_size = int(grid_size or max(512, 8 * (n + 1)))
        self.amplitudes = covariant_minimax_risk(self.n).amplitudes
        self.labels = TWO_PI * np.arange(self.grid_size) / self.grid_size

    def probabilities(self, family, theta):
        return covariant_outcome_probs(self.amplitudes, theta, self.grid_size)[1]


class ConstantEstimator(Estimator):
    """Always reports ``label``; its outcome distribution is the single point mass."""

    def __init__(self, label: float, copies: int = 1, period: Optional[float] = None):
        self.labels = np.array([float(label)])
        self.copies = int(copies)
        self.period = period

    def probabilities(self, family, theta):
        return np.ones(1)


def sld_measurement(f: ChannelFamily, theta: float, a=None, grouping_tol: float = 1e-8) -> QuantumEstimator:
    """Projective measurement onto the SLD eigenspaces of the output at ``theta``.

    ``a`` defaults to the maximally entangled input.  Labels are the locally
    unbiased estimates ``theta + l / J``.
    """
    d = f.dim_in
    a = np.eye(d) / math.sqrt(d) if a is None else as_cmatrix(a, "a")
    v = a.reshape(-1, 1)
    state = v @ v.conj().T
    point = StateFamilyPoint(channel_output(f, theta, state), channel_output(f, theta, state, derivative=True))
    ell = sld(point)
    j = float(np.trace(point.rho @ ell @ ell).real)
    w, vec = np.linalg.eigh(ell)
    scale = grouping_tol * max(1.0, float(np.max(np.abs(w))))
    groups, start = [], 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[i] - w[i - 1] > scale:
            groups.append((float(np.mean(w[start:i])), vec[:, start:i]))
            start = i
    povm = [g @ g.conj().T for _, g in groups]
    labels = [theta + (lam / j if j > 0 else 0.0) for lam, _ in groups]
    return QuantumEstimator(povm, labels, a=a)


# -- distributions and Fisher information ---------------------------------------------

def outcome_distribution(f: Optional[ChannelFamily], theta: float, e: Estimator) -> np.ndarray:
    """Born-rule probabilities with round-off negatives clipped and the total renormalized."""
    p = np.asarray(e.probabilities(f, theta), dtype=float)
    if np.any(p < NEG_FLOOR):
        raise ValidationError(f"negative outcome probability {p.min():.3g}")
    total = p.sum()
    if abs(total - 1.0) > POVM_TOL:
        raise ValidationError(f"outcome probabilities sum to {total:.12g}")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def classical_fisher(f: Optional[ChannelFamily], theta: float, e: Estimator, fd_step: float = 1e-5) -> float:
    """``sum_i (dp_i/dtheta)^2 / p_i`` by central differences.

    Outcomes with ``p_i < 1e-12`` are skipped.  If such an outcome reaches
    ``1e-12`` one step away, ``theta`` sits on a zero of its probability, the
    difference quotient is meaningless and :class:`DegenerateError` is raised.
    """
    if f is not None and not (f.contains(theta - fd_step) and f.contains(theta + fd_step)):
        raise ParameterError(f"theta={theta} is within one step of the boundary")
    p0 = outcome_distribution(f, theta, e)
    pp = outcome_distribution(f, theta + fd_step, e)
    pm = outcome_distribution(f, theta - fd_step, e)
    small = p0 < 1e-12
    if np.any(small & (np.maximum(pp, pm) > 1e-12)):
        raise DegenerateError(f"outcome distribution is degenerate at theta={theta}")
    dp = (pp - pm) / (2 * fd_step)
    keep = ~small
    return float(np.sum(dp[keep] ** 2 / p0[keep]))


# -- sampling ------------------------------------------------------------------------

def _period(f: Optional[ChannelFamily], e: Estimator) -> Optional[float]:
    if e.period is not None:
        return e.period
    return f.period if f is not None else None


def _clamped_labels(f: Optional[ChannelFamily], e: Estimator) -> np.ndarray:
    labels = e.labels
    if f is None or _period(f, e) is not None:
        return labels
    lo, hi = f.param_space
    clamped = np.clip(labels, lo, hi)
    if np.any(clamped != labels):
        log.info("clamped %d estimate label(s) into [%g, %g]", int(np.sum(clamped != labels)), lo, hi)
    return clamped


def sample_estimates(f: Optional[ChannelFamily], theta: float, e: Estimator, trials: int, seed: int,
                     stream_offset: int = 0) -> np.ndarray:
    """Estimates of ``trials`` independent runs; run ``t`` uses stream ``t + stream_offset``."""
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    cdf = kernels.cdf_from_probs(outcome_distribution(f, theta, e))
    idx = kernels.sample_categorical(cdf, seed, np.arange(trials, dtype=np.int64) + stream_offset, 1)[:, 0]
    return _clamped_labels(f, e)[idx]


def simulate_mse(f: Optional[ChannelFamily], theta: float, e: Estimator, trials: int, seed: int,
                 stream_offset: int = 0) -> MseEstimate:
    """Empirical (circular when a period is set) mean squared error."""
    est = sample_estimates(f, theta, e, trials, seed, stream_offset)
    return mse_from_errors(kernels.sq_errors(est, theta, _period(f, e)), theta, seed)


def exact_mse(f: Optional[ChannelFamily], theta: float, e: Estimator) -> float:
    p = outcome_distribution(f, theta, e)
    return float(p @ kernels.sq_errors(_clamped_labels(f, e), theta, _period(f, e)))


@dataclass
class LocalRiskReport:
    """``n^alpha`` times the largest simulated MSE over a grid on ``[theta0 - eps, theta0 + eps]``."""

    value: float
    n: int
    eps: float
    alpha: float
    thetas: np.ndarray
    mse: list
    argmax: int

    @property
    def std_error(self) -> float:
        return self.n**self.alpha * self.mse[self.argmax].std_error

    def to_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "n": self.n, "eps": self.eps,
                "alpha": self.alpha, "thetas": self.thetas,
                "mse": [m.mean for m in self.mse], "mse_std_error": [m.std_error for m in self.mse]}


def local_minimax_risk(f: Optional[ChannelFamily], e: Estimator, theta0: float, eps: float, grid_points: int = 9,
                       trials: int = 10_000, seed: int = 0, alpha: float = 2.0) -> LocalRiskReport:
    """Finite-``n``, fixed-``eps`` surrogate of the local asymptotic mini-max risk.

    The same random streams are used at every grid point.
    """
    if eps <= 0:
        raise ParameterError("eps must be positive")
    if grid_points < 5:
        raise ParameterError("grid_points must be at least 5")
    thetas = np.linspace(theta0 - eps, theta0 + eps, grid_points)
    mse = [simulate_mse(f, float(t), e, trials, seed) for t in thetas]
    means = np.array([m.mean for m in mse])
    k = int(np.argmax(means))
    return LocalRiskReport(float(e.copies**alpha * means[k]), e.copies, eps, alpha, thetas, mse, k)


# -- two-step estimator ------------------------------------------------------------

class Stage2(Protocol):
    uses: int

    def sample(self, f: ChannelFamily, theta: float, seed: int, streams: np.ndarray) -> np.ndarray: ...


def _mle_rows(loglik: np.ndarray, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Grid maximizer per row with parabolic refinement; also a flatness flag."""
    k = np.argmax(loglik, axis=1)
    rows = np.arange(loglik.shape[0])
    flat = (loglik.max(axis=1) - loglik.min(axis=1)) < 1e-9
    est = grid[k].astype(float)
    inner = (k > 0) & (k < grid.size - 1) & ~flat
    if np.any(inner) and grid.size > 2:
        ki = k[inner]
        r = rows[inner]
        lm, l0, lp = loglik[r, ki - 1], loglik[r, ki], loglik[r, ki + 1]
        den = lm - 2 * l0 + lp
        step = grid[1] - grid[0]
        off = np.where(den < 0, 0.5 * (lm - lp) / np.where(den < 0, den, -1.0), 0.0)
        est[inner] = grid[ki] + np.clip(off, -0.5, 0.5) * step
    return est, flat


class IidMleStage:
    """``uses`` independent runs of a single-copy estimator, combined by maximum likelihood
    over ``grid_points`` points of ``[center - width, center + width]``."""

    def __init__(self, per_copy: Estimator, uses: int, center: float, width: float, f: ChannelFamily,
                 grid_points: int = 401):
        if per_copy.copies != 1:
            raise ValueError("per-copy estimator must consume one channel use")
        lo, hi = f.param_space
        a, b = max(lo, center - width), min(hi, center + width)
        self.per_copy, self.uses, self.center = per_copy, int(uses), center
        self.grid = np.linspace(a, b, grid_points)
        table = np.array([outcome_distribution(f, float(t), per_copy) for t in self.grid])
        self.log_table = np.log(np.clip(table, 1e-300, None))

    def sample(self, f, theta, seed, streams):
        cdf = kernels.cdf_from_probs(outcome_distribution(f, theta, self.per_copy))
        counts = kernels.sample_counts(cdf, seed, streams, self.uses)
        est, flat = _mle_rows(counts @ self.log_table.T, self.grid)
        est[flat] = self.center
        return est


class BlockStage:
    """One run of an estimator that acts jointly on all its channel uses."""

    def __init__(self, estimator: Estimator):
        self.estimator = estimator
        self.uses = estimator.copies

    def sample(self, f, theta, seed, streams):
        cdf = kernels.cdf_from_probs(outcome_distribution(f, theta, self.estimator))
        idx = kernels.sample_categorical(cdf, seed, streams, 1)[:, 0]
        return _clamped_labels(f, self.estimator)[idx]


Stage2Builder = Callable[[float, int, float], Stage2]


def sld_stage2_builder(f: ChannelFamily, a=None, grid_points: int = 401) -> Stage2Builder:
    """Stage two measures every remaining use in the SLD eigenbasis at the stage-one estimate."""

    def build(theta1: float, uses: int, width: float) -> Stage2:
        return IidMleStage(sld_measurement(f, theta1, a), uses, theta1, width, f, grid_points)

    return build


def covariant_stage2_builder(grid_size: Optional[int] = None) -> Stage2Builder:
    """Stage two runs the optimal covariant phase scheme on all remaining uses."""

    def build(theta1: float, uses: int, width: float) -> Stage2:
        return BlockStage(CovariantPhaseEstimator(uses, grid_size))

    return build


@dataclass
class TwoStepResult:
    estimates: np.ndarray
    theta1: np.ndarray
    mse: MseEstimate
    n_total: int
    stage1_uses: int
    stage2_uses: int
    discarded: int
    failures: int
    notes: list = field(default_factory=list)

    @property
    def scaled_mse(self) -> float:
        return self.n_total * self.mse.mean

    def to_dict(self) -> dict:
        return {"mse": self.mse.to_dict(), "n_total": self.n_total, "stage1_uses": self.stage1_uses,
                "stage2_uses": self.stage2_uses, "discarded": self.discarded,
                "localization_failures": self.failures, "notes": list(self.notes)}


def two_step_estimator(f: ChannelFamily, theta: float, n_total: int, stage1: Estimator,
                       stage2_builder: Stage2Builder, seed: int, replicas: int = 1) -> TwoStepResult:
    """Localize with ``ceil(sqrt(n))`` single-copy runs, then refine with the remaining uses.

    Stage one is a maximum-likelihood fit over cells of width ``pi/ceil(sqrt n)``
    covering the parameter space.  A flat stage-one likelihood is counted as a
    localization failure.  The stage-two window is
    ``theta1 +- max(5/sqrt(m1 J1), pi/m1)`` with ``J1`` the stage-one Fisher
    information.  Uses the stage-two estimator does not consume are discarded.
    """
    if n_total < 4:
        raise ParameterError("n_total must be at least 4")
    if stage1.copies != 1:
        raise ValueError("stage-one estimator must consume one channel use")
    m1 = math.ceil(math.sqrt(n_total))
    m2 = n_total - m1
    lo, hi = f.param_space
    cell = math.pi / m1
    cells = max(1, math.ceil((hi - lo) / cell))
    grid = lo + (np.arange(cells) + 0.5) * (hi - lo) / cells
    table = np.log(np.clip([outcome_distribution(f, float(t), stage1) for t in grid], 1e-300, None))
    cdf = kernels.cdf_from_probs(outcome_distribution(f, theta, stage1))
    replica = np.arange(replicas, dtype=np.int64)
    counts = kernels.sample_counts(cdf, seed, 4 * replica, m1)
    loglik = counts @ table.T
    k = np.argmax(loglik, axis=1)
    flat = (loglik.max(axis=1) - loglik.min(axis=1)) < 1e-9
    k[flat] = cells // 2
    theta1 = grid[k]

    estimates = np.empty(replicas)
    notes: list = []
    consumed = None
    for idx in np.unique(k):
        t1 = float(grid[idx])
        try:
            j1 = classical_fisher(f, t1, stage1)
        except (DegenerateError, ParameterError):
            j1 = 0.0
        width = max(5 / math.sqrt(m1 * j1), cell) if j1 > 0 else (hi - lo) / 2
        stage = stage2_builder(t1, m2, width)
        if stage.uses > m2:
            raise ValidationError(f"stage two needs {stage.uses} uses but only {m2} remain")
        consumed = stage.uses if consumed is None else consumed
        if stage.uses != consumed:
            notes.append("stage-two use count varies with the stage-one estimate")
        rows = np.flatnonzero(k == idx)
        estimates[rows] = stage.sample(f, theta, seed, 4 * replica[rows] + 1)
    period = f.period
    mse = mse_from_errors(kernels.sq_errors(estimates, theta, period), theta, seed)
    discarded = m2 - (consumed or 0)
    if discarded:
        notes.append(f"{discarded} channel use(s) discarded per replica")
    return TwoStepResult(estimates, theta1, mse, n_total, m1, consumed or 0, discarded, int(flat.sum()), notes)


# -- unbiasedness diagnostics -----------------------------------------------------

@dataclass
class UnbiasednessReport:
    """Mean ``eta`` and variance ``v`` of the estimate along a grid, with slopes at interior points.

    ``holds[i]`` records ``v + 3 sigma_v >= max(|slope| - 3 sigma_slope, 0)^2 / J``
    at interior point ``i`` (``None`` where the Fisher information is undefined).
    """

    thetas: np.ndarray
    eta: np.ndarray
    v: np.ndarray
    v_se: np.ndarray
    eta_exact: np.ndarray
    v_exact: np.ndarray
    mse: np.ndarray
    slope_thetas: np.ndarray
    slope: np.ndarray
    slope_se: np.ndarray
    fisher: np.ndarray
    holds: list

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("thetas", "eta", "v", "v_se", "eta_exact", "v_exact", "mse",
                                                "slope_thetas", "slope", "slope_se")} | {
            "fisher": [None if not np.isfinite(x) else float(x) for x in self.fisher], "holds": self.holds}


def unbiasedness_diagnostics(f: Optional[ChannelFamily], e: Estimator, thetas, trials: int, seed: int
                             ) -> UnbiasednessReport:
    """Empirical and exact ``eta(theta)``, ``v(theta)`` and the slope ``d eta / d theta``.

    All grid points share the same random streams, so slopes are computed from
    per-trial differences with a matching standard error.  Variances use the
    plain sample average (no Bessel correction) so that the mean squared error
    splits exactly as ``v + (eta - theta)^2``.
    """
    thetas = np.asarray(thetas, dtype=float)
    if thetas.size < 3:
        raise ParameterError("need at least three grid points")
    samples = np.array([sample_estimates(f, float(t), e, trials, seed) for t in thetas])
    eta = samples.mean(axis=1)
    dev = samples - eta[:, None]
    v = np.mean(dev**2, axis=1)
    v_se = np.sqrt(np.maximum(np.mean(dev**4, axis=1) - v**2, 0.0) / trials)
    mse = np.mean((samples - thetas[:, None]) ** 2, axis=1)
    labels = _clamped_labels(f, e)
    eta_exact, v_exact = [], []
    for t in thetas:
        p = outcome_distribution(f, float(t), e)
        m = float(p @ labels)
        eta_exact.append(m)
        v_exact.append(float(p @ (labels - m) ** 2))
    diffs = (samples[2:] - samples[:-2]) / (thetas[2:] - thetas[:-2])[:, None]
    slope = diffs.mean(axis=1)
    slope_se = diffs.std(axis=1, ddof=1) / math.sqrt(trials) if trials > 1 else np.zeros_like(slope)
    fisher, holds = [], []
    for i, t in enumerate(thetas[1:-1]):
        try:
            j = classical_fisher(f, float(t), e)
        except (DegenerateError, ParameterError):
            fisher.append(float("nan"))
            holds.append(None)
            continue
        fisher.append(j)
        need = max(abs(slope[i]) - 3 * slope_se[i], 0.0) ** 2
        holds.append(bool(v[i + 1] + 3 * v_se[i + 1] >= (need / j if j > 0 else (0.0 if need == 0 else math.inf))))
    return UnbiasednessReport(thetas, eta, v, v_se, np.array(eta_exact), np.array(v_exact), mse,
                              thetas[1:-1], slope, slope_se, np.array(fisher), holds)


# -- convenience constructors -----------------------------------------------------

def bell_basis() -> list[np.ndarray]:
    """Projectors onto the four Bell states of two qubits."""
    s = 1 / math.sqrt(2)
    vecs = [np.array([1, 0, 0, 1]) * s, np.array([1, 0, 0, -1]) * s,
            np.array([0, 1, 1, 0]) * s, np.array([0, 1, -1, 0]) * s]
    return [np.outer(v, v).astype(np.complex128) for v in vecs]


def bell_phase_damping_estimator() -> QuantumEstimator:
    """Maximally entangled input and the Bell measurement for qubit phase damping.

    Outcome probabilities are ``(1 +- e^{-theta})/2`` on the first two
    projectors.  The labels are placeholders: the estimator is meant for
    likelihood-based localization, not single-shot estimates.
    """
    labels = [0.0, 0.0, 0.0, 0.0]
    return QuantumEstimator(bell_basis(), labels, a=np.eye(2) / math.sqrt(2))


def trine_phase_estimator() -> QuantumEstimator:
    """Input ``|+>`` and the three-outcome covariant qubit measurement; identifies the phase on the circle."""
    povm, labels = [], []
    for j in range(3):
        phi = 2 * math.pi * j / 3
        v = np.array([1, np.exp(1j * phi)]) / math.sqrt(2)
        povm.append((2 / 3) * np.outer(v, v.conj()))
        labels.append((-phi) % TWO_PI)
    return QuantumEstimator(povm, labels, a=np.array([[1], [1]]) / math.sqrt(2), period=TWO_PI)


def noon_parity_estimator(n: int) -> QuantumEstimator:
    """Noon input on ``n`` qubit phase rotations with the parity-type measurement, built explicitly."""
    from .phase import noon_state

    psi = noon_state(n)
    minus = psi.copy()
    minus[-1] *= -1
    dim = psi.size
    p_plus, p_minus = np.outer(psi, psi.conj()), np.outer(minus, minus.conj())
    rest = np.eye(dim) - p_plus - p_minus
    return QuantumEstimator([p_plus, p_minus, rest], [0.0, math.pi / n, 0.0], a=psi.reshape(-1, 1),
                            copies=n, period=TWO_PI)
