"""SLD and RLD Fisher information for state and channel families.

Divergent RLD values are represented by the :data:`INFINITE` marker, never by
a float infinity, so no arithmetic silently absorbs them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .channel import ChannelFamily, ChoiPair, apply_with_ancilla, channel_output, choi_pair, tensor_families, tensor_power
from .errors import ConditionCError, DimensionError, SupportConditionError, ValidationError
from .linalg import DEFAULT_RANK_TOL, hermitize, op_norm, partial_trace, pinv_on_support, support_projector

SUPPORT_TOL = 1e-7


class _Infinite:
    """Marker for a divergent Fisher information."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITE"

    def __bool__(self):
        return True

    def __reduce__(self):
        return (_Infinite, ())


INFINITE = _Infinite()


def is_infinite(x) -> bool:
    return x is INFINITE


@dataclass(frozen=True)
class StateFamilyPoint:
    """A state ``rho_theta`` and its derivative at one parameter value."""

    rho: np.ndarray
    drho: np.ndarray

    def __post_init__(self):
        rho = hermitize(self.rho, 1e-9, "rho")
        drho = hermitize(self.drho, 1e-9, "drho")
        if rho.shape != drho.shape:
            raise DimensionError("rho and drho must have the same shape")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > 1e-9:
            raise ValidationError(f"rho has trace {tr:.12g}")
        if np.linalg.eigvalsh(rho)[0] < -1e-10:
            raise ValidationError("rho is not positive semidefinite")
        if abs(np.trace(drho)) > 1e-8:
            raise ValidationError("drho is not traceless")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "drho", drho)

    def support_leak(self) -> float:
        """``||(I-P) drho (I-P)||`` with ``P`` the support projector of rho."""
        q = np.eye(self.rho.shape[0]) - support_projector(self.rho).projector
        return op_norm(q @ self.drho @ q)


@dataclass
class FisherReport:
    j_sld: Optional[float] = None
    j_rld: object = None
    sld_operator: Optional[np.ndarray] = None
    rld_operator: Optional[np.ndarray] = None
    condition_c: Optional[bool] = None
    notes: str = ""


def sld(p: StateFamilyPoint, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Symmetric logarithmic derivative ``L`` with ``drho = (L rho + rho L)/2``.

    Entries are ``2 drho_jk / (l_j + l_k)`` in the eigenbasis of rho and zero
    where ``l_j + l_k <= tol * l_max``.  Raises :class:`SupportConditionError`
    when the defining equation cannot be satisfied.
    """
    w, v = np.linalg.eigh(p.rho)
    w = np.clip(w, 0.0, None)
    d = v.conj().T @ p.drho @ v
    s = w[:, None] + w[None, :]
    mask = s > tol * max(w[-1], 1e-300)
    l_eig = np.zeros_like(d)
    l_eig[mask] = 2 * d[mask] / s[mask]
    ell = v @ l_eig @ v.conj().T
    ell = 0.5 * (ell + ell.conj().T)
    resid = float(np.max(np.abs(0.5 * (ell @ p.rho + p.rho @ ell) - p.drho)))
    if resid > SUPPORT_TOL * max(1.0, float(np.max(np.abs(p.drho)))):
        raise SupportConditionError(f"SLD equation residual {resid:.3g}: derivative leaks outside the support")
    return ell


def sld_fisher(p: StateFamilyPoint) -> float:
    ell = sld(p)
    return max(0.0, float(np.trace(p.rho @ ell @ ell).real))


def rld_fisher(p: StateFamilyPoint, tol: float = SUPPORT_TOL):
    """``Tr drho^2 rho^-1`` when ``range(rho)`` contains ``range(drho)``, else :data:`INFINITE`."""
    info = support_projector(p.rho)
    q = np.eye(p.rho.shape[0]) - info.projector
    scale = op_norm(p.drho)
    if scale == 0.0:
        return 0.0
    if op_norm(q @ p.drho) > tol * scale:
        return INFINITE
    return max(0.0, float(np.trace(p.drho @ pinv_on_support(p.rho) @ p.drho).real))


def rld_operator(p: StateFamilyPoint) -> np.ndarray:
    return pinv_on_support(p.rho) @ p.drho


def fisher_report(p: StateFamilyPoint) -> FisherReport:
    rep = FisherReport()
    try:
        rep.sld_operator = sld(p)
        rep.j_sld = max(0.0, float(np.trace(p.rho @ rep.sld_operator @ rep.sld_operator).real))
    except SupportConditionError as exc:
        rep.notes = str(exc)
    rep.j_rld = rld_fisher(p)
    if not is_infinite(rep.j_rld):
        rep.rld_operator = rld_operator(p)
    return rep


def pure_unitary_fisher(h, u) -> float:
    """``4 (<u|H^2|u> - <u|H|u>^2)`` for the family ``e^{i theta H}|u>``."""
    h = hermitize(h, name="H")
    u = np.asarray(u, dtype=np.complex128).reshape(-1)
    if abs(np.linalg.norm(u) - 1.0) > 1e-10:
        raise ValidationError("u must be a unit vector")
    hu = h @ u
    mean = np.vdot(u, hu).real
    return max(0.0, 4.0 * (np.vdot(hu, hu).real - mean * mean))


# -- channel-level quantities -------------------------------------------------------

def condition_c(pair: ChoiPair, tol: float = SUPPORT_TOL) -> bool:
    """Whether ``range(rho[L])`` contains ``range(D[L]^2) = range(D[L])``."""
    q = np.eye(pair.rho.shape[0]) - support_projector(pair.rho).projector
    return op_norm(q @ pair.deriv) <= tol * max(op_norm(pair.deriv), 1e-12)


def rld_channel_matrix(pair: ChoiPair) -> np.ndarray:
    """``Tr_K D rho^-1 D``, an operator on the reference system."""
    m = pair.deriv @ pinv_on_support(pair.rho) @ pair.deriv
    t = partial_trace(m, pair.dim_out, pair.dim_in, keep="second")
    return 0.5 * (t + t.conj().T)


@dataclass(frozen=True)
class RldWitness:
    """Input achieving the channel RLD bound.

    ``vector`` is the top eigenvector ``w`` of ``Tr_K D rho^-1 D``; the rank-one
    input ``conj(A)A^T = |w><w|`` is where the supremum is approached.  Because
    the bound is attained exactly only by invertible inputs, ``a`` realizes
    ``conj(A)A^T = sigma`` with ``sigma`` the (normalized) top eigenprojector
    mixed with weight ``epsilon`` on the complement.
    """

    vector: np.ndarray
    sigma: np.ndarray
    a: np.ndarray
    epsilon: float
    top_multiplicity: int
    note: str = ""


class RldBound(NamedTuple):
    value: object
    witness: Optional[RldWitness]


def _input_from_sigma(sigma: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(sigma)
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    # conj(A) A^T = S S^dag = sigma for A = conj(S) with S Hermitian
    return np.conj(root)


def max_rld_channel(pair: ChoiPair, tol: float = SUPPORT_TOL, epsilon: float = 1e-7) -> RldBound:
    """Maximum RLD Fisher information over inputs: ``||Tr_K D rho^-1 D||``.

    Returns :data:`INFINITE` (and no witness) when condition (C) fails.
    """
    if not condition_c(pair, tol):
        return RldBound(INFINITE, None)
    t = rld_channel_matrix(pair)
    w, v = np.linalg.eigh(t)
    top = float(w[-1])
    d = pair.dim_in
    in_top = w >= top - 1e-9 * max(1.0, abs(top))
    k = int(in_top.sum())
    p_top = v[:, in_top] @ v[:, in_top].conj().T
    if k == d:
        sigma, eps = np.eye(d) / d, 0.0
    else:
        sigma = (1 - epsilon) * p_top / k + epsilon * (np.eye(d) - p_top) / (d - k)
        eps = epsilon
    sigma = 0.5 * (sigma + sigma.conj().T)
    note = ("top eigenspace is the whole input space; maximally mixed reduced input attains the bound"
            if k == d else
            f"rank-deficient top eigenspace; mixed with weight {eps:g} to keep the input invertible")
    witness = RldWitness(v[:, -1].copy(), sigma, _input_from_sigma(sigma), eps, k, note)
    return RldBound(max(0.0, top), witness)


def output_point(pair: ChoiPair, a) -> StateFamilyPoint:
    return StateFamilyPoint(apply_with_ancilla(pair, a), apply_with_ancilla(pair, a, derivative=True))


def fisher_for_input(pair: ChoiPair, a, which: str = "SLD"):
    """SLD or RLD Fisher information of the output family for the pure input ``|A>>``."""
    p = output_point(pair, a)
    if which.upper() == "SLD":
        return sld_fisher(p)
    if which.upper() == "RLD":
        return rld_fisher(p)
    raise ValueError(f"which must be 'SLD' or 'RLD', not {which!r}")


# -- input optimization -------------------------------------------------------------

def _outputs(pair: ChoiPair, a_stack: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Output states and derivatives for a stack of input matrices ``(m, d, d)``."""
    dk, dr = pair.dim_out, pair.dim_in
    rho = pair.rho.reshape(dk, dr, dk, dr)
    der = pair.deriv.reshape(dk, dr, dk, dr)
    ac = np.conj(a_stack)
    out = np.einsum("mki,akbl,mlj->maibj", a_stack, rho, ac, optimize=True)
    dout = np.einsum("mki,akbl,mlj->maibj", a_stack, der, ac, optimize=True)
    n = dk * dr
    m = a_stack.shape[0]
    return out.reshape(m, n, n), dout.reshape(m, n, n)


def sld_fisher_batch(rhos: np.ndarray, drhos: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Vectorized ``sum_jk 2|drho_jk|^2/(l_j+l_k)`` over a stack of states."""
    rhos = 0.5 * (rhos + np.conj(np.swapaxes(rhos, -1, -2)))
    w, v = np.linalg.eigh(rhos)
    w = np.clip(w, 0.0, None)
    dt = np.conj(np.swapaxes(v, -1, -2)) @ drhos @ v
    s = w[..., :, None] + w[..., None, :]
    cut = tol * np.maximum(w[..., -1], 1e-300)
    mask = s > cut[..., None, None]
    safe = np.where(mask, s, 1.0)
    return np.sum(np.where(mask, 2 * np.abs(dt) ** 2 / safe, 0.0), axis=(-1, -2))


class SldOptimum(NamedTuple):
    value: float
    a: np.ndarray


def _normalize(a: np.ndarray) -> np.ndarray:
    n = np.sqrt(np.sum(np.abs(a) ** 2, axis=(-1, -2), keepdims=True))
    return a / n


def sld_input_gradient(pair: ChoiPair, a, tol: float = DEFAULT_RANK_TOL) -> tuple[float, np.ndarray]:
    """SLD Fisher information of the output for input ``A`` and its gradient in ``A``.

    With ``dJ = Tr(2L d(drho) - L^2 d(rho))`` and ``rho_A = X rho X^dag``,
    ``X = I (x) A^T``, the first-order change is ``2 Re sum_ij W_ij dA_ij`` with
    ``W = Tr_K(rho X^dag (-L^2) + D X^dag 2L)``.  The returned gradient is
    ``2 conj(W)``, the steepest-ascent direction for real steps.
    """
    a = np.asarray(a, dtype=np.complex128)
    rho_a, d_a = (m[0] for m in _outputs(pair, a[None]))
    rho_a = 0.5 * (rho_a + rho_a.conj().T)
    w, v = np.linalg.eigh(rho_a)
    w = np.clip(w, 0.0, None)
    dt = v.conj().T @ d_a @ v
    s = w[:, None] + w[None, :]
    mask = s > tol * max(w[-1], 1e-300)
    l_eig = np.where(mask, 2 * dt / np.where(mask, s, 1.0), 0.0)
    value = float(np.sum(np.where(mask, 2 * np.abs(dt) ** 2 / np.where(mask, s, 1.0), 0.0)))
    ell = v @ l_eig @ v.conj().T
    ell = 0.5 * (ell + ell.conj().T)
    xd = np.kron(np.eye(pair.dim_out), np.conj(a))
    big = pair.rho @ xd @ (-ell @ ell) + pair.deriv @ xd @ (2 * ell)
    wr = partial_trace(big, pair.dim_out, pair.dim_in, keep="second")
    return value, 2 * np.conj(wr)


def optimize_sld_input(pair: ChoiPair, restarts: int = 16, steps: int = 200, seed: int = 0,
                       fd_step: float = 1e-6, warm_start=None, gradient: str = "analytic") -> SldOptimum:
    """Projected gradient ascent of the SLD Fisher information over pure inputs ``|A>>``.

    The result is a certified lower bound on the channel SLD Fisher information
    (it is attained by the returned input).  Restart ``r`` is seeded from
    ``(seed, r)``; with ``warm_start`` given, restart 0 starts there.  Ties are
    broken towards the lowest restart index.  ``gradient="fd"`` replaces the
    analytic gradient by forward differences with step ``fd_step``.
    """
    if gradient not in ("analytic", "fd"):
        raise ValueError(f"gradient must be 'analytic' or 'fd', got {gradient!r}")
    d = pair.dim_in
    dim = 2 * d * d

    def value(stack):
        return sld_fisher_batch(*_outputs(pair, _normalize(stack)))

    best_val, best_a = -1.0, None
    for r in range(max(1, restarts)):
        if r == 0 and warm_start is not None:
            x = np.asarray(warm_start, dtype=np.complex128).reshape(d, d)
        else:
            rng = np.random.default_rng([seed, r])
            x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        x = _normalize(x[None])[0]
        fx = float(value(x[None])[0])
        lr = 0.3
        for _ in range(steps):
            if gradient == "fd":
                flat = np.concatenate([x.real.ravel(), x.imag.ravel()])
                pert = flat[None, :] + fd_step * np.eye(dim)
                stack = (pert[:, : d * d] + 1j * pert[:, d * d:]).reshape(dim, d, d)
                g = (value(stack) - fx) / fd_step
                g = (g[: d * d] + 1j * g[d * d:]).reshape(d, d)
            else:
                g = sld_input_gradient(pair, x)[1]
            # tangent part on the unit sphere
            g = g - np.real(np.vdot(x, g)) * x
            gnorm = float(np.linalg.norm(g))
            if gnorm == 0.0 or not np.isfinite(gnorm):
                break
            y = x + (lr / gnorm) * g
            y = _normalize(y[None])[0]
            fy = float(value(y[None])[0])
            if fy > fx:
                x, fx = y, fy
                lr = min(1.0, lr * 1.5)
            else:
                lr *= 0.5
                if lr < 1e-7:
                    break
        if fx > best_val:
            best_val, best_a = fx, x
    return SldOptimum(best_val, best_a)


# -- additivity ---------------------------------------------------------------------

def additivity_residual(f1: ChannelFamily, f2: ChannelFamily, theta: float) -> float:
    """``|J^R[L1 (x) L2] - J^R[L1] - J^R[L2]|`` for families satisfying condition (C)."""
    p1, p2 = choi_pair(f1, theta), choi_pair(f2, theta)
    for p, f in ((p1, f1), (p2, f2)):
        if not condition_c(p):
            raise ConditionCError(f"{f.label} violates condition (C) at theta={theta}")
    joint = max_rld_channel(choi_pair(tensor_families(f1, f2), theta)).value
    if is_infinite(joint):
        raise ConditionCError("product family violates condition (C)")
    return abs(joint - max_rld_channel(p1).value - max_rld_channel(p2).value)


@dataclass
class SuperadditivityResult:
    holds: bool
    j_n: float
    j_m: float
    j_nm: float
    slack: float
    inputs: dict = field(default_factory=dict, repr=False)

    def __bool__(self):
        return self.holds


def superadditivity_check(f: ChannelFamily, theta: float, n: int, m: int, restarts: int = 8,
                          steps: int = 150, seed: int = 0, slack: float = 2e-3) -> SuperadditivityResult:
    """Check ``J^S[L^(n+m)] >= J^S[L^n] + J^S[L^m]`` with optimizer lower bounds.

    The ``n+m`` copy search is warm-started from the tensor product of the
    ``n`` and ``m`` copy optima, whose value is exactly the sum.
    """
    fn, fm = tensor_power(f, n), tensor_power(f, m)
    on = optimize_sld_input(choi_pair(fn, theta), restarts, steps, seed)
    om = optimize_sld_input(choi_pair(fm, theta), restarts, steps, seed + 1)
    joint = tensor_families(fn, fm)
    onm = optimize_sld_input(choi_pair(joint, theta), restarts, steps, seed + 2, warm_start=np.kron(on.a, om.a))
    holds = onm.value >= on.value + om.value - slack
    return SuperadditivityResult(holds, on.value, om.value, onm.value, slack,
                                 {"n": on.a, "m": om.a, "n+m": onm.a})


# -- stochastic shift family ---------------------------------------------------------

def shift_mixture_stage_fisher(n: int, h_diag, probs=None, cross_check: bool = False, theta: float = 0.0) -> float:
    """SLD Fisher information ``n^2 (h_a - h_b)^2`` after the shift-revealing measurement.

    Computed from the effective two-level pure family with Hamiltonian
    ``diag(n h_a, n h_b)``.  With ``cross_check`` the full post-measurement
    state on ``(C^d)^n (x) C^2`` is built and must agree within ``1e-8``.
    """
    h = np.asarray(h_diag, dtype=float)
    value = pure_unitary_fisher(np.diag([n * h.max(), n * h.min()]), np.array([1, 1]) / math.sqrt(2))
    if cross_check:
        if probs is None:
            raise ValueError("cross_check needs the mixing probabilities")
        full = shift_mixture_full_space_fisher(n, h, probs, theta)
        if abs(full - value) > 1e-8 * max(1.0, value):
            raise ValidationError(f"full-space Fisher information {full} disagrees with {value}")
    return value


def shift_mixture_full_space_fisher(n: int, h_diag, probs, theta: float = 0.0) -> float:
    """SLD Fisher information of the dephased post-measurement state, built explicitly."""
    from .channel import make_shift_mixture_family

    h = np.asarray(h_diag, dtype=float)
    d = h.size
    if d**n * 2 > 1024:
        raise DimensionError("full-space construction limited to d^n * 2 <= 1024")
    a, b = int(np.argmax(h)), int(np.argmin(h))
    fam = tensor_power(make_shift_mixture_family(probs, h), n)
    big = d**n

    def index(digits):
        out = 0
        for x in digits:
            out = out * d + (x % d)
        return out

    phi = np.zeros(big * 2, dtype=np.complex128)
    phi[index([a] * n) * 2 + 0] = 1 / math.sqrt(2)
    phi[index([b] * n) * 2 + 1] = 1 / math.sqrt(2)
    state = np.outer(phi, phi.conj())
    rho = channel_output(fam, theta, state)
    drho = channel_output(fam, theta, state, derivative=True)
    projectors = []
    for j in np.ndindex(*([d] * n)):
        v = np.zeros(big * 2)
        w = np.zeros(big * 2)
        v[index([x + a for x in j]) * 2 + 0] = 1
        w[index([x + b for x in j]) * 2 + 1] = 1
        projectors.append(np.outer(v, v) + np.outer(w, w))
    rho_m = sum(p @ rho @ p for p in projectors)
    drho_m = sum(p @ drho @ p for p in projectors)
    return sld_fisher(StateFamilyPoint(rho_m, drho_m))
