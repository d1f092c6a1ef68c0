"""Vectorization conventions, partial trace, norms."""

import numpy as np
import pytest

from memtensor.linalg import (
    SpaceLayout,
    apply_superop,
    devectorize,
    embed_environment_superop,
    hermitize,
    is_density_operator,
    left_mult_superop,
    matrix_exponential,
    operator_norm,
    partial_trace,
    right_mult_superop,
    sandwich_superop,
    trace_distance,
    trace_norm,
    trace_out_superop,
    validate_density_operator,
    vectorize,
)

RNG = np.random.default_rng(20260811)


def random_complex(rows, cols=None):
    cols = rows if cols is None else cols
    return RNG.standard_normal((rows, cols)) + 1j * RNG.standard_normal((rows, cols))


def random_state(d):
    a = random_complex(d)
    rho = a @ a.conj().T
    return rho / np.trace(rho)


KET0 = np.array([1.0, 0.0])
KET1 = np.array([0.0, 1.0])
KET_PLUS = np.array([1.0, 1.0]) / np.sqrt(2)
KET_MINUS = np.array([1.0, -1.0]) / np.sqrt(2)


def projector(ket):
    return np.outer(ket, ket.conj())


def test_vectorize_identity_column_stacking():
    assert np.array_equal(vectorize(np.eye(2)), [1, 0, 0, 1])
    # off-diagonal placement pins the column convention
    e01 = np.zeros((2, 2))
    e01[0, 1] = 1.0
    assert np.array_equal(vectorize(e01), [0, 0, 1, 0])


def test_vectorize_round_trip_exact():
    for rows, cols in [(4, 4), (3, 5), (2, 2), (1, 7)]:
        x = random_complex(rows, cols)
        assert np.array_equal(devectorize(vectorize(x), rows, cols), x)


def test_devectorize_size_error():
    with pytest.raises(ValueError):
        devectorize(np.arange(5), 2, 2)


def test_sandwich_superop_matches_direct_product():
    # oracle: explicit A X B^dag
    for _ in range(5):
        a, b, x = random_complex(3), random_complex(3), random_complex(3)
        direct = a @ x @ b.conj().T
        via_superop = devectorize(sandwich_superop(a, b) @ vectorize(x), 3)
        np.testing.assert_allclose(via_superop, direct, atol=1e-13)


def test_sandwich_identity_is_identity_superop():
    np.testing.assert_array_equal(sandwich_superop(np.eye(2), np.eye(2)), np.eye(4))


def test_commutator_from_left_right_superops():
    for _ in range(5):
        a, x = random_complex(2), random_complex(2)
        comm = left_mult_superop(a) - right_mult_superop(a)
        np.testing.assert_allclose(
            devectorize(comm @ vectorize(x), 2), a @ x - x @ a, atol=1e-13
        )


def test_sandwich_jump_operator_on_state():
    # L = 1 (x) |0><1| acting on a joint two-qubit state
    l_op = np.kron(np.eye(2), np.outer(KET0, KET1))
    rho = random_state(4)
    np.testing.assert_allclose(
        apply_superop(sandwich_superop(l_op, l_op), rho),
        l_op @ rho @ l_op.conj().T,
        atol=1e-13,
    )


def test_partial_trace_product_state():
    layout = SpaceLayout(2, 3)
    rho, tau = random_state(2), random_state(3)
    np.testing.assert_allclose(
        partial_trace(np.kron(rho, tau), layout, "system"), rho, atol=1e-13
    )
    np.testing.assert_allclose(
        partial_trace(np.kron(rho, tau), layout, "environment"), tau, atol=1e-13
    )


def test_partial_trace_bell_state():
    bell = np.zeros((4, 4), dtype=complex)
    phi = (np.kron(KET0, KET0) + np.kron(KET1, KET1)) / np.sqrt(2)
    bell = np.outer(phi, phi.conj())
    np.testing.assert_allclose(
        partial_trace(bell, SpaceLayout(2, 2), "system"), np.eye(2) / 2, atol=1e-13
    )


def test_partial_trace_correlated_two_qubit_state():
    rho_se = 0.75 * np.kron(projector(KET0), projector(KET_PLUS)) + 0.25 * np.kron(
        projector(KET1), projector(KET_MINUS)
    )
    reduced = partial_trace(rho_se, SpaceLayout(2, 2), "system")
    np.testing.assert_allclose(reduced, np.diag([0.75, 0.25]), atol=1e-13)


def test_partial_trace_preserves_trace_and_linearity():
    layout = SpaceLayout(2, 2)
    for _ in range(5):
        x, y = random_complex(4), random_complex(4)
        a, b = RNG.standard_normal(2)
        for keep in ("system", "environment"):
            assert abs(np.trace(partial_trace(x, layout, keep)) - np.trace(x)) < 1e-12
            np.testing.assert_allclose(
                partial_trace(a * x + b * y, layout, keep),
                a * partial_trace(x, layout, keep) + b * partial_trace(y, layout, keep),
                atol=1e-12,
            )


def test_partial_trace_dimension_mismatch():
    with pytest.raises(ValueError):
        partial_trace(np.eye(3), SpaceLayout(2, 2), "system")


def test_trace_out_superop_matches_partial_trace():
    layout = SpaceLayout(2, 2)
    mat = trace_out_superop(layout, "system")
    x = random_complex(4)
    np.testing.assert_allclose(
        devectorize(mat @ vectorize(x), 2), partial_trace(x, layout, "system"), atol=1e-13
    )


def test_embed_environment_superop():
    layout = SpaceLayout(2, 2)
    tau = random_state(2)
    mat = embed_environment_superop(tau, layout)
    x = random_complex(2)
    np.testing.assert_allclose(
        devectorize(mat @ vectorize(x), 4), np.kron(x, tau), atol=1e-13
    )


def test_matrix_exponential_small_cases():
    np.testing.assert_array_equal(matrix_exponential(np.zeros((3, 3)), 1.0), np.eye(3))
    thetas = np.array([0.3, -1.2, 2.5])
    np.testing.assert_allclose(
        matrix_exponential(np.diag(1j * thetas), 1.0),
        np.diag(np.exp(1j * thetas)),
        atol=1e-13,
    )


def test_matrix_exponential_antihermitian_is_unitary():
    a = random_complex(4)
    m = a - a.conj().T
    u = matrix_exponential(m, 0.7)
    np.testing.assert_allclose(u @ u.conj().T, np.eye(4), atol=1e-10)


def test_matrix_exponential_commuting_composition():
    a = random_complex(4)
    m = a + a.conj().T
    np.testing.assert_allclose(
        matrix_exponential(m, 0.9),
        matrix_exponential(m, 0.4) @ matrix_exponential(m, 0.5),
        atol=1e-10,
    )


def test_norms_trivial_values():
    assert abs(operator_norm(np.eye(4)) - 1.0) < 1e-14
    rho = random_state(3)
    assert trace_distance(rho, rho) < 1e-14
    assert abs(trace_distance(projector(KET0), projector(KET1)) - 2.0) < 1e-13


def test_trace_norm_is_sum_of_singular_values():
    x = random_complex(3)
    assert abs(trace_norm(x) - np.linalg.svd(x, compute_uv=False).sum()) < 1e-12


def test_trace_distance_symmetry_and_triangle():
    for _ in range(5):
        a, b, c = (random_state(3) for _ in range(3))
        assert abs(trace_distance(a, b) - trace_distance(b, a)) < 1e-12
        assert trace_distance(a, c) <= trace_distance(a, b) + trace_distance(b, c) + 1e-12


def test_validate_density_operator():
    validate_density_operator(np.diag([0.5, 0.5]))
    with pytest.raises(ValueError):
        validate_density_operator(np.diag([0.6, 0.6]))
    with pytest.raises(ValueError):
        validate_density_operator(np.array([[0.5, 0.5], [0.0, 0.5]]))
    with pytest.raises(ValueError):
        validate_density_operator(np.diag([1.5, -0.5]))
    assert is_density_operator(hermitize(random_state(4)))
