"""Dense complex linear algebra with support-aware helpers.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.  Vectorization
follows the row-major convention ``|A>> = sum_jk A[j, k] |j> (x) |k>``: the
row index of ``A`` lives on the first tensor factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NotHermitianError, NotPositiveError, NotProjectorError

DEFAULT_RANK_TOL = 1e-9
HERMITIAN_TOL = 1e-10
_ZERO_FLOOR = 1e-12


def as_cmatrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D complex array."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(a))))
    return float(np.max(np.abs(a - a.conj().T))) <= tol * scale


def hermitize(a, tol: float = HERMITIAN_TOL, name: str = "matrix") -> np.ndarray:
    """Check ``a`` is Hermitian within ``tol`` and return ``(a + a^dag)/2``."""
    m = as_cmatrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got {m.shape}")
    if not is_hermitian(m, tol):
        raise NotHermitianError(f"{name} is not Hermitian within {tol:g}")
    return 0.5 * (m + m.conj().T)


@dataclass(frozen=True)
class HermitianEig:
    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.conj().T


def hermitian_eig(a, tol: float = HERMITIAN_TOL) -> HermitianEig:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending."""
    h = hermitize(a, tol)
    w, v = np.linalg.eigh(h)
    return HermitianEig(w, v)


@dataclass(frozen=True)
class SupportInfo:
    """Orthogonal projector onto the support of a PSD matrix."""

    projector: np.ndarray
    rank: int
    cutoff: float


def kron(a, b) -> np.ndarray:
    return np.kron(as_cmatrix(a, "a"), as_cmatrix(b, "b"))


def kron_all(*mats) -> np.ndarray:
    out = np.ones((1, 1), dtype=np.complex128)
    for m in mats:
        out = np.kron(out, m)
    return out


def partial_trace(m, dim_first: int, dim_second: int, keep: str = "first") -> np.ndarray:
    """Trace out one factor of a bipartite operator on ``C^dim_first (x) C^dim_second``.

    ``keep="first"`` discards the second factor and vice versa.
    """
    m = as_cmatrix(m)
    n = dim_first * dim_second
    if m.shape != (n, n):
        raise DimensionError(f"expected a {n}x{n} matrix for dims ({dim_first}, {dim_second}), got {m.shape}")
    t = m.reshape(dim_first, dim_second, dim_first, dim_second)
    if keep == "first":
        return np.einsum("ajbj->ab", t)
    if keep == "second":
        return np.einsum("jajb->ab", t)
    raise ValueError(f"keep must be 'first' or 'second', not {keep!r}")


def vec_ket(a) -> np.ndarray:
    """``|A>>`` as a column vector of length ``rows*cols``."""
    a = as_cmatrix(a)
    return a.reshape(-1, 1).copy()


def unvec(v, rows: int, cols: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    if v.size != rows * cols:
        raise DimensionError(f"vector of length {v.size} cannot be reshaped to {rows}x{cols}")
    return v.reshape(rows, cols).copy()


def _cutoff(values: np.ndarray, tol: float) -> float:
    top = float(np.max(values)) if values.size else 0.0
    if top <= 0.0:
        return _ZERO_FLOOR
    return tol * top


def support_projector(a, tol: float = DEFAULT_RANK_TOL) -> SupportInfo:
    """Projector onto eigenvectors of ``a`` with eigenvalue above ``tol * lambda_max``."""
    eig = hermitian_eig(a)
    cut = _cutoff(eig.values, tol)
    keep = eig.values > cut
    v = eig.vectors[:, keep]
    return SupportInfo(v @ v.conj().T, int(keep.sum()), cut)


def pinv_on_support(a, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Inverse of a PSD matrix on its support, extended by zero elsewhere."""
    eig = hermitian_eig(a)
    cut = _cutoff(eig.values, tol)
    keep = eig.values > cut
    v = eig.vectors[:, keep]
    return (v / eig.values[keep]) @ v.conj().T


def op_norm(a) -> float:
    """Largest singular value."""
    a = as_cmatrix(a)
    if not np.any(a):
        return 0.0
    return float(np.linalg.norm(a, 2))


def _check_projector(p: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    p = hermitize(p, tol, "projector")
    if float(np.max(np.abs(p @ p - p))) > tol * max(1.0, p.shape[0]):
        raise NotProjectorError("matrix is not idempotent")
    return p


def lemma_a1_residual(a, p) -> float:
    """``lambda_min(A^-1 - (PAP)^+)`` for strictly positive ``A`` and projector ``P``.

    The inverse of ``PAP`` is taken on the range of ``P`` and extended by zero.
    The matrix inequality ``A^-1 >= (PAP)^-1`` says the result is >= 0.
    """
    a = hermitize(a, name="A")
    p = _check_projector(as_cmatrix(p))
    if a.shape != p.shape:
        raise DimensionError("A and P must have the same shape")
    w, v = np.linalg.eigh(a)
    if w[0] <= 1e-10:
        raise NotPositiveError(f"A is not strictly positive (min eigenvalue {w[0]:.3g})")
    a_inv = (v / w) @ v.conj().T
    # invert PAP on range(P) only, so tiny PAP eigenvalues are never mistaken for support
    pw, pv = np.linalg.eigh(p)
    basis = pv[:, pw > 0.5]
    if basis.shape[1] == 0:
        compressed_inv = np.zeros_like(a)
    else:
        block = basis.conj().T @ a @ basis
        compressed_inv = basis @ np.linalg.inv(block) @ basis.conj().T
    diff = a_inv - compressed_inv
    return float(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))[0])


def lemma_a2_residual(a, p, eps: float) -> float:
    """``lambda_min(eps P + (R^2/eps)(I-P) - PA(I-P) - (I-P)AP)`` with ``R = ||PA(I-P)||``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    a = hermitize(a, name="A")
    p = _check_projector(as_cmatrix(p))
    if a.shape != p.shape:
        raise DimensionError("A and P must have the same shape")
    q = np.eye(a.shape[0]) - p
    off = p @ a @ q
    r = op_norm(off)
    m = eps * p + (r * r / eps) * q - off - off.conj().T
    return float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])
