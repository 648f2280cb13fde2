"""Independent reference computations used by the tests."""

import math

import numpy as np
from scipy import integrate
from scipy.linalg import solve_continuous_lyapunov


def sld_lyapunov(rho, drho):
    """SLD from the Lyapunov equation rho L + L rho = 2 drho (full-rank rho only)."""
    return solve_continuous_lyapunov(rho, 2 * drho)


def batch_outputs(rho_choi, a_stack, dim_out, dim_in):
    """(I (x) A^T) M (I (x) conj A) for a stack of A, built with explicit Kronecker products."""
    x = np.einsum("ab,mji->maibj", np.eye(dim_out), a_stack).reshape(len(a_stack), dim_out * dim_in,
                                                                     dim_out * dim_in)
    return x @ rho_choi @ np.conj(np.swapaxes(x, -1, -2))


def rld_values(rho_choi, d_choi, a_stack, dim_out, dim_in):
    """Tr drho pinv(rho) drho for each input, via numpy's Moore-Penrose inverse."""
    rhos = batch_outputs(rho_choi, a_stack, dim_out, dim_in)
    drs = batch_outputs(d_choi, a_stack, dim_out, dim_in)
    pinv = np.linalg.pinv(rhos, rcond=1e-10, hermitian=True)
    return np.einsum("mij,mjk,mki->m", drs, pinv, drs).real


def random_unit_inputs(rng, count, d):
    a = rng.normal(size=(count, d, d)) + 1j * rng.normal(size=(count, d, d))
    return a / np.linalg.norm(a, axis=(1, 2), keepdims=True)


def phase_damping_rld(theta):
    """Closed form e^{-2 theta} / (1 - e^{-2 theta}) for d_01 = e^{-theta}."""
    c2 = math.exp(-2 * theta)
    return c2 / (1 - c2)


def cost_coefficient_quad(m):
    """(1/2 pi) int_{-pi}^{pi} u^2 cos(m u) du by plain adaptive quadrature."""
    v, _ = integrate.quad(lambda u: u * u * math.cos(m * u), -math.pi, math.pi, limit=400, epsabs=1e-12,
                          epsrel=1e-11)
    return v / (2 * math.pi)


def toeplitz_min_eig_dense(n):
    """lambda_min of the circular-cost Toeplitz matrix from quadrature coefficients and a full solver."""
    a = [cost_coefficient_quad(m) for m in range(n + 1)]
    idx = np.abs(np.subtract.outer(np.arange(n + 1), np.arange(n + 1)))
    return float(np.linalg.eigvalsh(np.array(a)[idx])[0])


def binary_fisher(p, dp):
    return dp * dp / (p * (1 - p))
