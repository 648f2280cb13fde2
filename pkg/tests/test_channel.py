import math

import numpy as np
import pytest
from scipy.linalg import expm

from qest.channel import (ChannelFamily, apply_with_ancilla, channel_output, choi_from_kraus, choi_pair,
                          exponential_phase_damping, finite_difference_choi, make_coin_family,
                          make_depolarizing_family, make_phase_damping_family, make_shift_mixture_family,
                          make_unitary_family, reorder_product_choi, tensor_families, tensor_power)
from qest.errors import (DimensionError, NotHermitianError, NotPositiveError, ParameterError, ValidationError)
from qest.linalg import partial_trace, vec_ket

from conftest import LN2, rand_hermitian, rand_input

H = np.diag([0.5, -0.5])
BELL = vec_ket(np.eye(2)) @ vec_ket(np.eye(2)).conj().T


def choi_by_definition(f, theta):
    """(Lambda (x) id)(|I>><<I|) applied one matrix unit at a time."""
    d = f.dim_in
    out = np.zeros((f.dim_out * d, f.dim_out * d), dtype=complex)
    for j in range(d):
        for k in range(d):
            ejk = np.zeros((d, d))
            ejk[j, k] = 1
            img = sum(a @ ejk @ a.conj().T for a in f.kraus_at(theta))
            out += np.kron(img, ejk)
    return out


def constant_family(d=2):
    return ChannelFamily(d, d, lambda t: [np.eye(d)], lambda t: [np.zeros((d, d))], (-1.0, 1.0), label="identity")


def builtins(rng):
    x = rng.normal(size=3)
    return [
        make_unitary_family(rand_hermitian(rng, 3)),
        exponential_phase_damping([[0, 1], [1, 0]]),
        exponential_phase_damping((x[:, None] - x[None, :]) ** 2),
        make_depolarizing_family(2),
        make_depolarizing_family(3),
        make_shift_mixture_family([0.5, 0.3, 0.2], [0.4, -0.1, 0.7]),
        make_coin_family(),
    ]


def test_unitary_kraus_values():
    f = make_unitary_family(H)
    assert np.allclose(f.kraus_at(0.0)[0], np.eye(2))
    assert np.allclose(f.kraus_at(math.pi)[0], np.diag([1j, -1j]))
    assert np.allclose(f.kraus_at(math.pi)[0], expm(1j * math.pi * H))


def test_unitary_rejects_non_hermitian():
    with pytest.raises(NotHermitianError):
        make_unitary_family(np.array([[0, 1], [0, 0]]))


def test_every_builtin_is_trace_preserving(rng):
    for f in builtins(rng):
        lo, hi = f.param_space
        for t in rng.uniform(lo + 1e-3, hi - 1e-3, size=20):
            assert f.tp_residual(t) <= 1e-9
            assert len(f.kraus_at(t)) <= f.dim_in * f.dim_out


def test_choi_matches_definition_and_marginals(rng):
    for f in builtins(rng):
        lo, hi = f.param_space
        for t in rng.uniform(lo + 1e-3, hi - 1e-3, size=3):
            pair = choi_pair(f, t)
            assert np.allclose(pair.rho, choi_by_definition(f, t), atol=1e-12)
            r = pair.marginal_residuals()
            assert r["tr_k_rho_minus_identity"] <= 1e-9
            assert r["tr_k_deriv"] <= 1e-7
            assert r["rho_min_eigenvalue"] >= -1e-10


def test_analytic_and_finite_difference_derivatives_agree(rng):
    for f in builtins(rng):
        lo, hi = f.param_space
        t = float(rng.uniform(lo + 0.01, hi - 0.01))
        pair = choi_pair(f, t)
        fd = finite_difference_choi(f, t)
        assert np.max(np.abs(fd - pair.deriv)) <= 1e-5 * max(1.0, np.max(np.abs(pair.deriv)))


def test_phase_damping_choi_at_ln2():
    pair = choi_pair(exponential_phase_damping([[0, 1], [1, 0]]), LN2)
    expected = np.zeros((4, 4))
    expected[np.ix_([0, 3], [0, 3])] = [[1, 0.5], [0.5, 1]]
    assert np.allclose(pair.rho, expected, atol=1e-12)
    dexp = np.zeros((4, 4))
    dexp[0, 3] = dexp[3, 0] = -0.5
    assert np.allclose(pair.deriv, dexp, atol=1e-12)


def test_phase_damping_extreme_coefficients():
    ident = make_phase_damping_family(lambda t: np.ones((3, 3)), 3)
    pair = choi_pair(ident, 1.0)
    v = vec_ket(np.eye(3))
    assert np.allclose(pair.rho, v @ v.conj().T, atol=1e-12)
    deph = make_phase_damping_family(lambda t: np.eye(3), 3)
    pair = choi_pair(deph, 1.0)
    expected = sum(np.outer(np.kron(e, e), np.kron(e, e)) for e in np.eye(3))
    assert np.allclose(pair.rho, expected, atol=1e-12)


def test_phase_damping_validation():
    with pytest.raises(NotPositiveError):
        make_phase_damping_family(lambda t: np.array([[1, 2], [2, 1]]), 2).kraus_at(0.5)
    with pytest.raises(ValidationError):
        make_phase_damping_family(lambda t: np.array([[2, 0], [0, 1]]), 2).kraus_at(0.5)


def test_depolarizing_choi_values():
    f = make_depolarizing_family(2)
    assert np.allclose(choi_from_kraus(f.kraus_at(1.0)), np.eye(4) / 2)
    assert np.allclose(choi_from_kraus(f.kraus_at(0.0)), BELL)
    for p in (0.1, 0.3, 0.9):
        assert np.linalg.matrix_rank(choi_pair(f, p).rho, tol=1e-9) == 4
    with pytest.raises(ParameterError):
        f.kraus_at(1.2)


def test_shift_mixture_cases(rng):
    u = make_shift_mixture_family([1, 0], [0.5, -0.5])
    assert np.allclose(u.kraus_at(0.7)[0], make_unitary_family(H).kraus_at(0.7)[0])
    f = make_shift_mixture_family([0.5, 0.5], [0.5, -0.5])
    for t in rng.uniform(0, 6, size=5):
        assert f.tp_residual(t) <= 1e-12
    g = make_shift_mixture_family([0.5, 0.0, 0.25, 0.25], [1, 0, 0, -1])
    assert np.linalg.matrix_rank(choi_pair(g, 0.0).rho, tol=1e-9) == 3
    with pytest.raises(ValidationError):
        make_shift_mixture_family([0.6, 0.6], [0, 1])


def test_identity_channel_choi():
    pair = choi_pair(constant_family(), 0.0)
    assert np.allclose(pair.rho, BELL)
    assert np.trace(pair.rho).real == pytest.approx(2)
    assert np.allclose(pair.deriv, 0)


def test_choi_pair_catches_tp_violation():
    bad = ChannelFamily(2, 2, lambda t: [1.1 * np.eye(2)], None, (0.0, 1.0))
    with pytest.raises(ValidationError):
        choi_pair(bad, 0.5)


def test_choi_pair_catches_wrong_derivative():
    f = make_unitary_family(H)
    wrong = ChannelFamily(2, 2, f.kraus, lambda t: [2j * H @ f.kraus_at(t)[0]], f.param_space)
    with pytest.raises(ValidationError):
        choi_pair(wrong, 1.0)


def test_finite_difference_needs_room():
    f = ChannelFamily(2, 2, make_unitary_family(H).kraus, None, (0.0, 1.0))
    with pytest.raises(ParameterError):
        choi_pair(f, 0.0)
    pair = choi_pair(f, 0.5)
    assert np.allclose(pair.deriv, choi_pair(make_unitary_family(H), 0.5).deriv, atol=1e-8)


def test_apply_with_ancilla_maximally_entangled(rng):
    for f in builtins(rng)[:6]:
        d = f.dim_in
        pair = choi_pair(f, 0.4)
        out = apply_with_ancilla(pair, np.eye(d) / math.sqrt(d))
        assert np.allclose(out, pair.rho / d)
        assert np.trace(out).real == pytest.approx(1, abs=1e-9)
        assert np.linalg.eigvalsh(out)[0] >= -1e-10
    bell = apply_with_ancilla(choi_pair(constant_family(), 0.0), np.eye(2) / math.sqrt(2))
    assert np.allclose(bell, BELL / 2)


def test_apply_with_ancilla_product_input(rng):
    f = make_depolarizing_family(2)
    pair = choi_pair(f, 0.3)
    u = rng.normal(size=2) + 1j * rng.normal(size=2)
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
    # A^T = u v^T puts |u><u| on the reference and |v><v| into the channel
    a = np.outer(v, u)
    out = apply_with_ancilla(pair, a)
    ref = partial_trace(out, 2, 2, keep="second")
    assert np.allclose(ref, np.outer(u, u.conj()))
    sys_in = np.outer(v, v.conj())
    expected = sum(k @ sys_in @ k.conj().T for k in f.kraus_at(0.3))
    assert np.allclose(out, np.kron(expected, np.outer(u, u.conj())))


def test_apply_with_ancilla_matches_channel_output(rng):
    f = make_shift_mixture_family([0.5, 0.5], [0.5, -0.5])
    pair = choi_pair(f, 0.9)
    a = rand_input(rng, 2)
    v = vec_ket(a)
    state = v @ v.conj().T
    assert np.allclose(apply_with_ancilla(pair, a), channel_output(f, 0.9, state))
    assert np.allclose(apply_with_ancilla(pair, a, derivative=True), channel_output(f, 0.9, state, derivative=True))


def test_apply_with_ancilla_normalization():
    pair = choi_pair(make_unitary_family(H), 0.1)
    with pytest.raises(ValidationError):
        apply_with_ancilla(pair, np.eye(2))
    with pytest.raises(DimensionError):
        apply_with_ancilla(pair, np.eye(3) / math.sqrt(3))


def test_product_with_identity_family():
    f = exponential_phase_damping([[0, 1], [1, 0]])
    joint = choi_pair(tensor_families(f, constant_family()), 0.7)
    expected = reorder_product_choi(np.kron(choi_pair(f, 0.7).rho, BELL), (2, 2), (2, 2))
    assert np.allclose(joint.rho, expected)


def test_product_rule_for_derivative(rng):
    f1 = exponential_phase_damping([[0, 1], [1, 0]])
    f2 = make_depolarizing_family(2)
    t = 0.35
    p1, p2 = choi_pair(f1, t), choi_pair(f2, t)
    joint = choi_pair(tensor_families(f1, f2), t)
    expected = reorder_product_choi(np.kron(p1.deriv, p2.rho) + np.kron(p1.rho, p2.deriv), (2, 2), (2, 2))
    assert np.allclose(joint.deriv, expected, atol=1e-12)
    assert np.allclose(joint.rho, reorder_product_choi(np.kron(p1.rho, p2.rho), (2, 2), (2, 2)))


def test_tensor_power_of_unitary_is_unitary_of_sum():
    f3 = tensor_power(make_unitary_family(H), 3)
    i2 = np.eye(2)
    total = np.kron(np.kron(H, i2), i2) + np.kron(np.kron(i2, H), i2) + np.kron(np.kron(i2, i2), H)
    g = make_unitary_family(total)
    for t in (0.1, 1.3, 2.9):
        assert np.allclose(f3.kraus_at(t)[0], g.kraus_at(t)[0])
    pair = choi_pair(f3, 0.4)
    assert pair.marginal_residuals()["tr_k_deriv"] <= 1e-7


def test_tensor_dimension_overflow():
    f = make_depolarizing_family(9)
    with pytest.raises(DimensionError):
        tensor_families(f, f)


def test_unitary_choi_rank_one_and_depolarizing_full_rank(rng):
    u = make_unitary_family(rand_hermitian(rng, 3))
    dep = make_depolarizing_family(3)
    for t in rng.uniform(0.05, 0.95, size=5):
        assert np.linalg.matrix_rank(choi_pair(u, t).rho, tol=1e-9) == 1
        assert np.linalg.matrix_rank(choi_pair(dep, t).rho, tol=1e-9) == 9


def test_fold_uses_period():
    f = make_unitary_family(H, period=2 * math.pi)
    assert f.fold(2 * math.pi + 0.5) == pytest.approx(0.5)
    assert exponential_phase_damping([[0, 1], [1, 0]]).fold(12.0) == 12.0


def test_oracle_congruence_matches_ancilla_output(rng):
    import oracles
    from conftest import rand_input

    pair = choi_pair(make_depolarizing_family(3), 0.3)
    a = rand_input(rng, 3)
    expected = apply_with_ancilla(pair, a)
    assert np.allclose(oracles.batch_outputs(pair.rho, a[None], 3, 3)[0], expected, atol=1e-13)
