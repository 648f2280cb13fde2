"""One-parameter channel families and their Choi matrices.

A family is described by Kraus operators ``F_i(theta)`` mapping the input
space ``H = C^d`` to the output space ``K = C^d'``.  The Choi matrix keeps the
unnormalized convention ``rho[L] = (L (x) id)(|I>><<I|)`` on ``K (x) R`` so that
``Tr_K rho[L] = I_d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError, NotHermitianError, NotPositiveError, ParameterError, ValidationError
from .linalg import as_cmatrix, hermitize, is_hermitian, partial_trace

KrausFn = Callable[[float], Sequence[np.ndarray]]

MAX_DIM = 4096
TP_TOL = 1e-9
CHOI_MARGINAL_TOL = 1e-9
DERIV_MARGINAL_TOL = 1e-7
PSD_FLOOR = -1e-10
FD_CONSISTENCY_TOL = 1e-5
RICHARDSON_TRIGGER = 1e-4


@dataclass(frozen=True)
class ChannelFamily:
    """A smooth family ``theta -> Lambda_theta`` given by Kraus operators.

    ``kraus_deriv`` is optional; when absent, or when it returns ``None`` at a
    point, derivatives fall back to central differences of the Choi matrix.
    ``period`` marks a circular parameter (errors are then measured modulo it).
    """

    dim_in: int
    dim_out: int
    kraus: KrausFn
    kraus_deriv: Optional[Callable[[float], Optional[Sequence[np.ndarray]]]] = None
    param_space: tuple[float, float] = (-1.0, 1.0)
    period: Optional[float] = None
    label: str = "channel"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lo, hi = self.param_space
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ParameterError(f"param_space must be a finite interval, got {self.param_space}")
        if self.dim_in < 1 or self.dim_out < 1:
            raise DimensionError("dimensions must be positive")
        if self.dim_in * self.dim_out > MAX_DIM:
            raise DimensionError(f"Choi dimension {self.dim_in * self.dim_out} exceeds {MAX_DIM}")

    @property
    def bound(self) -> float:
        """``E = sup |theta|`` over the parameter space."""
        return max(abs(self.param_space[0]), abs(self.param_space[1]))

    @property
    def choi_dim(self) -> int:
        return self.dim_in * self.dim_out

    def contains(self, theta: float) -> bool:
        return self.param_space[0] <= theta <= self.param_space[1]

    def kraus_at(self, theta: float) -> list[np.ndarray]:
        ops = [np.asarray(f, dtype=np.complex128) for f in self.kraus(float(theta))]
        if not ops:
            raise ValidationError(f"{self.label}: empty Kraus set")
        for f in ops:
            if f.shape != (self.dim_out, self.dim_in):
                raise DimensionError(f"{self.label}: Kraus operator of shape {f.shape}, "
                                     f"expected {(self.dim_out, self.dim_in)}")
        return ops

    def kraus_deriv_at(self, theta: float) -> Optional[list[np.ndarray]]:
        if self.kraus_deriv is None:
            return None
        ops = self.kraus_deriv(float(theta))
        if ops is None:
            return None
        return [np.asarray(f, dtype=np.complex128) for f in ops]

    def tp_residual(self, theta: float) -> float:
        ops = self.kraus_at(theta)
        s = sum(f.conj().T @ f for f in ops)
        return float(np.max(np.abs(s - np.eye(self.dim_in))))

    def check_tp(self, theta: float, tol: float = TP_TOL) -> None:
        r = self.tp_residual(theta)
        if r > tol:
            raise ValidationError(f"{self.label}: trace preservation violated at theta={theta} (residual {r:.3g})")

    def fold(self, theta):
        """Map ``theta`` into the parameter space by the period (identity when linear)."""
        if self.period is None:
            return theta
        lo = self.param_space[0]
        return lo + np.mod(np.asarray(theta, dtype=float) - lo, self.period)


@dataclass(frozen=True)
class ChoiPair:
    rho: np.ndarray
    deriv: np.ndarray
    theta: float
    dim_in: int
    dim_out: int
    source: str = ""

    def marginal_residuals(self) -> dict[str, float]:
        tk_rho = partial_trace(self.rho, self.dim_out, self.dim_in, keep="second")
        tk_d = partial_trace(self.deriv, self.dim_out, self.dim_in, keep="second")
        return {
            "tr_k_rho_minus_identity": float(np.max(np.abs(tk_rho - np.eye(self.dim_in)))),
            "tr_k_deriv": float(np.max(np.abs(tk_d))),
            "rho_min_eigenvalue": float(np.linalg.eigvalsh(self.rho)[0]),
        }

    def validate(self) -> None:
        r = self.marginal_residuals()
        if r["tr_k_rho_minus_identity"] > CHOI_MARGINAL_TOL:
            raise ValidationError(f"{self.source}: Tr_K rho != I (residual {r['tr_k_rho_minus_identity']:.3g})")
        if r["tr_k_deriv"] > DERIV_MARGINAL_TOL:
            raise ValidationError(f"{self.source}: Tr_K D != 0 (residual {r['tr_k_deriv']:.3g})")
        if r["rho_min_eigenvalue"] < PSD_FLOOR * max(1.0, self.dim_in):
            raise ValidationError(f"{self.source}: Choi matrix not PSD (min eigenvalue {r['rho_min_eigenvalue']:.3g})")


def choi_from_kraus(ops: Sequence[np.ndarray]) -> np.ndarray:
    # (F (x) I)|I>> = |F>>, so the Choi matrix is sum_i |F_i>><<F_i|
    w = np.stack([np.asarray(f).reshape(-1) for f in ops], axis=1)
    return w @ w.conj().T


def choi_deriv_from_kraus(ops: Sequence[np.ndarray], dops: Sequence[np.ndarray]) -> np.ndarray:
    w = np.stack([np.asarray(f).reshape(-1) for f in ops], axis=1)
    dw = np.stack([np.asarray(f).reshape(-1) for f in dops], axis=1)
    m = dw @ w.conj().T
    return m + m.conj().T


def _choi_at(f: ChannelFamily, theta: float) -> np.ndarray:
    return choi_from_kraus(f.kraus_at(theta))


def finite_difference_choi(f: ChannelFamily, theta: float, step: float = 1e-5) -> np.ndarray:
    """Central-difference derivative of the Choi matrix.

    Falls back to Richardson extrapolation over steps ``h`` and ``h/2`` when
    the two central differences disagree by more than ``1e-4`` relative.
    """
    lo, hi = f.param_space
    if theta - step < lo or theta + step > hi:
        raise ParameterError(f"theta={theta} is within the finite-difference step of the boundary {f.param_space}")
    d1 = (_choi_at(f, theta + step) - _choi_at(f, theta - step)) / (2 * step)
    h2 = step / 2
    d2 = (_choi_at(f, theta + h2) - _choi_at(f, theta - h2)) / (2 * h2)
    scale = max(float(np.max(np.abs(d2))), 1e-12)
    if float(np.max(np.abs(d1 - d2))) > RICHARDSON_TRIGGER * scale:
        d = (4 * d2 - d1) / 3
    else:
        d = d1
    return 0.5 * (d + d.conj().T)


def choi_pair(f: ChannelFamily, theta: float, fd_step: float = 1e-5, check_derivative: bool = True) -> ChoiPair:
    """Choi matrix and its theta-derivative at ``theta``, validated."""
    theta = float(theta)
    f.check_tp(theta)
    ops = f.kraus_at(theta)
    rho = choi_from_kraus(ops)
    dops = f.kraus_deriv_at(theta)
    if dops is None:
        deriv = finite_difference_choi(f, theta, fd_step)
    else:
        deriv = choi_deriv_from_kraus(ops, dops)
        lo, hi = f.param_space
        if check_derivative and lo <= theta - fd_step and theta + fd_step <= hi:
            fd = finite_difference_choi(f, theta, fd_step)
            err = float(np.max(np.abs(fd - deriv)))
            if err > FD_CONSISTENCY_TOL * max(1.0, float(np.max(np.abs(deriv)))):
                raise ValidationError(f"{f.label}: analytic derivative disagrees with finite differences ({err:.3g})")
    pair = ChoiPair(rho, deriv, theta, f.dim_in, f.dim_out, f.label)
    pair.validate()
    return pair


def _ancilla_factor(a, d: int) -> np.ndarray:
    a = as_cmatrix(a, "A")
    if a.shape != (d, d):
        raise DimensionError(f"input matrix must be {d}x{d}, got {a.shape}")
    norm = np.trace(a.conj() @ a.T)
    if abs(norm - 1.0) > 1e-9:
        raise ValidationError(f"input matrix not normalized: Tr(conj(A) A^T) = {norm:.12g}")
    return a


def apply_with_ancilla(pair: ChoiPair, a, derivative: bool = False) -> np.ndarray:
    """Output ``(I (x) A^T) rho (I (x) conj(A))`` for the pure input ``|A>>`` on ``H (x) R``.

    With ``derivative=True`` the same congruence is applied to the Choi
    derivative, giving the derivative of the output state.
    """
    a = _ancilla_factor(a, pair.dim_in)
    x = np.kron(np.eye(pair.dim_out), a.T)
    m = pair.deriv if derivative else pair.rho
    return x @ m @ x.conj().T


def channel_output(f: ChannelFamily, theta: float, state, derivative: bool = False) -> np.ndarray:
    """``(Lambda_theta (x) id_R)(state)`` for a density ``state`` on ``H (x) R``.

    The reference dimension is inferred from the state size (1 means no
    reference).  With ``derivative=True`` returns the theta-derivative, using
    analytic Kraus derivatives when available.
    """
    s = as_cmatrix(state, "state")
    if s.shape[0] != s.shape[1] or s.shape[0] % f.dim_in:
        raise DimensionError(f"state of shape {s.shape} does not fit input dimension {f.dim_in}")
    r = s.shape[0] // f.dim_in
    eye_r = np.eye(r)
    ops = f.kraus_at(theta)
    if not derivative:
        return sum(np.kron(k, eye_r) @ s @ np.kron(k, eye_r).conj().T for k in ops)
    dops = f.kraus_deriv_at(theta)
    if dops is None:
        h = 1e-5
        return (channel_output(f, theta + h, s) - channel_output(f, theta - h, s)) / (2 * h)
    out = sum(np.kron(dk, eye_r) @ s @ np.kron(k, eye_r).conj().T for k, dk in zip(ops, dops))
    return out + out.conj().T


# -- tensor products -----------------------------------------------------------------

def reorder_product_choi(m: np.ndarray, dims_out: tuple[int, int], dims_in: tuple[int, int]) -> np.ndarray:
    """Permute an operator on ``(K1 R1) (x) (K2 R2)`` to ``(K1 K2) (x) (R1 R2)``."""
    k1, k2 = dims_out
    r1, r2 = dims_in
    n = k1 * k2 * r1 * r2
    t = np.asarray(m).reshape(k1, r1, k2, r2, k1, r1, k2, r2)
    return t.transpose(0, 2, 1, 3, 4, 6, 5, 7).reshape(n, n)


def tensor_families(f1: ChannelFamily, f2: ChannelFamily) -> ChannelFamily:
    """Product family ``Lambda_theta (x) Lambda~_theta`` sharing one parameter."""
    d_in = f1.dim_in * f2.dim_in
    d_out = f1.dim_out * f2.dim_out
    if d_in * d_out > MAX_DIM:
        raise DimensionError(f"product Choi dimension {d_in * d_out} exceeds {MAX_DIM}")
    lo = max(f1.param_space[0], f2.param_space[0])
    hi = min(f1.param_space[1], f2.param_space[1])
    if not lo < hi:
        raise ParameterError("parameter spaces do not overlap")

    def kraus(theta):
        return [np.kron(a, b) for a in f1.kraus_at(theta) for b in f2.kraus_at(theta)]

    def kraus_deriv(theta):
        d1, d2 = f1.kraus_deriv_at(theta), f2.kraus_deriv_at(theta)
        if d1 is None or d2 is None:
            return None
        k1, k2 = f1.kraus_at(theta), f2.kraus_at(theta)
        return [np.kron(da, b) + np.kron(a, db) for a, da in zip(k1, d1) for b, db in zip(k2, d2)]

    period = f1.period if f1.period == f2.period else None
    return ChannelFamily(d_in, d_out, kraus, kraus_deriv, (lo, hi), period,
                         f"({f1.label})x({f2.label})", {"factors": (f1, f2)})


def tensor_power(f: ChannelFamily, n: int) -> ChannelFamily:
    if n < 1:
        raise ValueError("n must be >= 1")
    out = f
    for _ in range(n - 1):
        out = tensor_families(out, f)
    if n > 1:
        out = ChannelFamily(out.dim_in, out.dim_out, out.kraus, out.kraus_deriv, out.param_space,
                            out.period, f"({f.label})^{n}", {"base": f, "copies": n})
    return out


# -- concrete families -------------------------------------------------------------

def make_unitary_family(h, param_space=(0.0, 2 * math.pi), period=None, label=None) -> ChannelFamily:
    """``rho -> exp(i theta H) rho exp(-i theta H)``."""
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DimensionError("Hamiltonian must be square")
    if not is_hermitian(h):
        raise NotHermitianError("Hamiltonian is not Hermitian")
    h = hermitize(h)
    w, v = np.linalg.eigh(h)

    def unitary(theta):
        return (v * np.exp(1j * theta * w)) @ v.conj().T

    d = h.shape[0]
    return ChannelFamily(d, d, lambda t: [unitary(t)], lambda t: [1j * h @ unitary(t)],
                         tuple(param_space), period, label or f"unitary(d={d})", {"hamiltonian": h})


def _phase_damping_factors(c: np.ndarray) -> tuple[list[np.ndarray], Optional[np.ndarray]]:
    """Diagonal Kraus operators from a factorization ``C = sum_i w_i w_i^dag``.

    Returns the Kraus list and the Cholesky factor when ``C`` is positive
    definite (``None`` otherwise, in which case an eigen-factorization is used).
    """
    try:
        low = np.linalg.cholesky(c)
        if np.min(np.abs(np.diag(low))) > 1e-7:
            return [np.diag(low[:, i]) for i in range(c.shape[0])], low
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(c)
    keep = w > 1e-14 * max(1.0, w[-1])
    return [np.diag(np.sqrt(w[i]) * v[:, i]) for i in np.flatnonzero(keep)], None


def make_phase_damping_family(d_fn: Callable[[float], np.ndarray], dim: int,
                              d_deriv_fn: Optional[Callable[[float], np.ndarray]] = None,
                              param_space=(0.0, 10.0), label=None) -> ChannelFamily:
    """``rho -> sum_kl d_kl(theta) rho_kl |k><l|``.

    ``d_fn`` returns the coefficient matrix, which must have unit diagonal and
    be positive semidefinite.  Kraus operators are diagonal matrices built from
    its Cholesky factor; with ``d_deriv_fn`` the Kraus derivatives follow from
    differentiating the Cholesky factorization.
    """

    def coeffs(theta):
        c = np.asarray(d_fn(theta), dtype=np.complex128)
        if c.shape != (dim, dim):
            raise DimensionError(f"coefficient matrix must be {dim}x{dim}")
        if np.max(np.abs(np.diag(c) - 1)) > 1e-12:
            raise ValidationError("phase damping coefficients must have unit diagonal")
        c = hermitize(c, 1e-12, "coefficient matrix")
        if np.linalg.eigvalsh(c)[0] < -1e-12:
            raise NotPositiveError(f"coefficient matrix not PSD at theta={theta}")
        return c

    def kraus(theta):
        return _phase_damping_factors(coeffs(theta))[0]

    def kraus_deriv(theta):
        if d_deriv_fn is None:
            return None
        c = coeffs(theta)
        _, low = _phase_damping_factors(c)
        if low is None:
            return None
        dc = np.asarray(d_deriv_fn(theta), dtype=np.complex128)
        linv = np.linalg.inv(low)
        x = linv @ dc @ linv.conj().T
        phi = np.tril(x, -1) + 0.5 * np.diag(np.diag(x))
        dlow = low @ phi
        return [np.diag(dlow[:, i]) for i in range(dim)]

    return ChannelFamily(dim, dim, kraus, kraus_deriv, tuple(param_space), None,
                         label or f"phase_damping(d={dim})", {"coeffs": d_fn})


def exponential_phase_damping(rates, param_space=(0.0, 10.0), label=None) -> ChannelFamily:
    """Phase damping with ``d_kl(theta) = exp(-theta * rates[k, l])``."""
    g = np.asarray(rates, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise DimensionError("rates must be a square matrix")
    if np.any(np.diag(g) != 0) or not np.allclose(g, g.T):
        raise ValidationError("rates must be symmetric with zero diagonal")
    if np.any(g < 0):
        raise ValidationError("rates must be nonnegative")
    fam = make_phase_damping_family(lambda t: np.exp(-t * g), g.shape[0],
                                    lambda t: -g * np.exp(-t * g), param_space,
                                    label or f"phase_damping(d={g.shape[0]})")
    fam.meta["rates"] = g
    return fam


def weyl_operators(d: int) -> list[np.ndarray]:
    """Discrete Weyl basis ``X^a Z^b``; the identity comes first."""
    x = np.roll(np.eye(d), 1, axis=0)
    z = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    return [np.linalg.matrix_power(x, a) @ np.linalg.matrix_power(z, b) for a in range(d) for b in range(d)]


def make_depolarizing_family(d: int, param_space=(1e-6, 1.0), label=None) -> ChannelFamily:
    """``rho -> (1-p) rho + p Tr(rho) I/d`` with ``theta = p``."""
    weyl = weyl_operators(d)
    frac = 1.0 - 1.0 / d**2

    def check(p):
        if not 0.0 <= p <= 1.0:
            raise ParameterError(f"depolarizing weight {p} outside [0, 1]")

    def kraus(p):
        check(p)
        c0 = math.sqrt(1.0 - p * frac)
        c = math.sqrt(p) / d
        return [c0 * weyl[0]] + [c * w for w in weyl[1:]]

    def kraus_deriv(p):
        check(p)
        if p <= 0.0:
            raise ParameterError("depolarizing derivative undefined at p = 0")
        c0 = -frac / (2 * math.sqrt(1.0 - p * frac))
        c = 1.0 / (2 * d * math.sqrt(p))
        return [c0 * weyl[0]] + [c * w for w in weyl[1:]]

    return ChannelFamily(d, d, kraus, kraus_deriv, tuple(param_space), None, label or f"depolarizing(d={d})")


def shift_operator(d: int) -> np.ndarray:
    """Cyclic shift ``X|j> = |j+1 mod d>``."""
    return np.roll(np.eye(d, dtype=np.complex128), 1, axis=0)


def make_shift_mixture_family(probs, h_diag, param_space=(0.0, 2 * math.pi), period=None, label=None) -> ChannelFamily:
    """``rho -> sum_j p_j X^j e^{i theta H} rho e^{-i theta H} X^-j`` with diagonal ``H``."""
    p = np.asarray(probs, dtype=float)
    h = np.asarray(h_diag, dtype=float)
    d = h.size
    if p.shape != (d,):
        raise DimensionError("probs and h_diag must have the same length")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValidationError("probs must be a probability vector")
    x = shift_operator(d)
    shifts = [(math.sqrt(p[j]), np.linalg.matrix_power(x, j)) for j in range(d) if p[j] > 0]

    def kraus(theta):
        u = np.diag(np.exp(1j * theta * h))
        return [c * xj @ u for c, xj in shifts]

    def kraus_deriv(theta):
        du = np.diag(1j * h * np.exp(1j * theta * h))
        return [c * xj @ du for c, xj in shifts]

    fam = ChannelFamily(d, d, kraus, kraus_deriv, tuple(param_space), period, label or f"shift_mixture(d={d})")
    fam.meta.update(probs=p, h_diag=h)
    return fam


def make_coin_family(param_space=(-1.0, 1.0), label=None) -> ChannelFamily:
    """Preparation of the commuting qubit state ``diag((1+theta)/2, (1-theta)/2)``.

    The input space is one-dimensional; the classical Fisher information of the
    computational-basis measurement equals ``1/(1-theta^2)``.
    """
    lo, hi = param_space
    if lo < -1 or hi > 1:
        raise ParameterError("param_space must lie inside [-1, 1]")
    e0 = np.array([[1.0], [0.0]], dtype=np.complex128)
    e1 = np.array([[0.0], [1.0]], dtype=np.complex128)

    def kraus(theta):
        return [math.sqrt((1 + theta) / 2) * e0, math.sqrt((1 - theta) / 2) * e1]

    def kraus_deriv(theta):
        return [e0 / (4 * math.sqrt((1 + theta) / 2)), -e1 / (4 * math.sqrt((1 - theta) / 2))]

    return ChannelFamily(1, 2, kraus, kraus_deriv, tuple(param_space), None, label or "coin")
