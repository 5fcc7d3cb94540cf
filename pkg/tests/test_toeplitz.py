"""Tests for the one-level and two-level Hermitian Toeplitz structures."""
import numpy as np
import pytest

from bianm.domain.channel import atom, steering_vector
from bianm.domain.entities import LagLevel, OneLevelLagVector, TwoLevelLagTable
from bianm.domain.errors import InvalidLagError, NumericalError, ShapeMismatchError
from bianm.domain.toeplitz import (
    expand_one_level,
    expand_two_level,
    is_hermitian,
    lag_project,
    min_eigenvalue,
    psd_project,
    vandermonde_retrieve,
)


def random_hermitian(rng: np.random.Generator, side: int) -> np.ndarray:
    A = rng.standard_normal((side, side)) + 1j * rng.standard_normal((side, side))
    return 0.5 * (A + A.conj().T)


def random_one_level(rng: np.random.Generator, K: int) -> OneLevelLagVector:
    u = rng.standard_normal(K) + 1j * rng.standard_normal(K)
    u[0] = u[0].real
    return OneLevelLagVector(u)


def random_two_level(rng: np.random.Generator, M: int, N: int) -> TwoLevelLagTable:
    values = rng.standard_normal((N, 2 * M - 1)) + 1j * rng.standard_normal((N, 2 * M - 1))
    half = values[0, M:]
    values[0, : M - 1] = np.conj(half[::-1])
    values[0, M - 1] = values[0, M - 1].real
    return TwoLevelLagTable(values, M, N)


def test_expand_one_level_identity() -> None:
    T = expand_one_level(OneLevelLagVector([1, 0, 0]))
    np.testing.assert_allclose(T, np.eye(3))


def test_expand_one_level_rank_one_atom() -> None:
    T = expand_one_level(OneLevelLagVector([1, 1j, -1]))
    w = np.linalg.eigvalsh(T)
    assert np.trace(T).real == pytest.approx(3.0)
    assert w[-1] == pytest.approx(3.0)
    np.testing.assert_allclose(w[:-1], 0.0, atol=1e-12)
    # First column holds u, first row its conjugate.
    np.testing.assert_allclose(T[:, 0], [1, 1j, -1])
    np.testing.assert_allclose(T[0, :], [1, -1j, -1])


def test_expand_one_level_real_2x2() -> None:
    T = expand_one_level(OneLevelLagVector([2, 1]))
    np.testing.assert_allclose(T, [[2, 1], [1, 2]])
    np.testing.assert_allclose(np.linalg.eigvalsh(T), [1, 3])


def test_lags_of_steering_outer_product() -> None:
    a = steering_vector(6, 0.3)
    T = np.outer(a, a.conj())
    u = lag_project(T, LagLevel.ONE, 6)
    np.testing.assert_allclose(u.u, a, atol=1e-12)
    np.testing.assert_allclose(expand_one_level(u), T, atol=1e-12)


def test_zero_lag_must_be_real() -> None:
    with pytest.raises(InvalidLagError):
        OneLevelLagVector([1 + 1j, 0])


def test_expand_two_level_zero_and_identity() -> None:
    np.testing.assert_allclose(expand_two_level(TwoLevelLagTable.zeros(2, 3)), np.zeros((6, 6)))
    values = np.zeros((3, 3), dtype=complex)
    values[0, 1] = 1.0
    np.testing.assert_allclose(expand_two_level(TwoLevelLagTable(values, 2, 3)), np.eye(6))


def test_expand_two_level_single_atom_all_ones() -> None:
    a = atom(2, 2, 0.0, 0.0)
    u = lag_project(np.outer(a, a.conj()), LagLevel.TWO, (2, 2))
    T = expand_two_level(u)
    np.testing.assert_allclose(T, np.ones((4, 4)), atol=1e-12)
    assert np.trace(T).real == pytest.approx(4.0)


def test_two_level_index_convention() -> None:
    rng = np.random.default_rng(0)
    M, N = 3, 4
    u = random_two_level(rng, M, N)
    T = expand_two_level(u)
    for n in range(N):
        for m in range(M):
            for n2 in range(N):
                for m2 in range(M):
                    assert T[n * M + m, n2 * M + m2] == pytest.approx(u.at(n - n2, m - m2))
    assert is_hermitian(T)


def test_atom_outer_product_is_two_level_toeplitz() -> None:
    a = atom(3, 4, 0.21, 0.13)
    G = np.outer(a, a.conj())
    u = lag_project(G, LagLevel.TWO, (3, 4))
    np.testing.assert_allclose(expand_two_level(u), G, atol=1e-12)


def test_two_level_table_validation() -> None:
    with pytest.raises(ShapeMismatchError):
        TwoLevelLagTable(np.zeros((2, 2)), 2, 2)
    values = np.zeros((2, 3), dtype=complex)
    values[0, 1] = 1j
    with pytest.raises(InvalidLagError):
        TwoLevelLagTable(values, 2, 2)
    values = np.zeros((2, 3), dtype=complex)
    values[0, 0] = 1.0
    with pytest.raises(InvalidLagError):
        TwoLevelLagTable(values, 2, 2)


def test_lag_project_symmetrises_before_averaging() -> None:
    u = lag_project(np.array([[1.0, 2.0], [0.0, 1.0]]), LagLevel.ONE, 2)
    np.testing.assert_allclose(u.u, [1, 1])


def test_lag_project_two_level_identity() -> None:
    u = lag_project(np.eye(4), LagLevel.TWO, (2, 2))
    expected = np.zeros((2, 3))
    expected[0, 1] = 1.0
    np.testing.assert_allclose(u.values, expected)


def test_lag_project_rejects_wrong_side() -> None:
    with pytest.raises(ShapeMismatchError):
        lag_project(np.eye(5), LagLevel.TWO, (2, 2))
    with pytest.raises(ShapeMismatchError):
        lag_project(np.eye(3), LagLevel.ONE, 4)


def test_lag_project_is_idempotent() -> None:
    rng = np.random.default_rng(1)
    for _ in range(10):
        u = random_one_level(rng, 5)
        np.testing.assert_allclose(lag_project(expand_one_level(u), LagLevel.ONE, 5).u, u.u)
        table = random_two_level(rng, 3, 2)
        again = lag_project(expand_two_level(table), LagLevel.TWO, (3, 2))
        np.testing.assert_allclose(again.values, table.values, atol=1e-12)


def test_projection_residual_is_orthogonal_to_toeplitz_subspace() -> None:
    rng = np.random.default_rng(2)
    for _ in range(20):
        G = random_hermitian(rng, 6)
        residual = G - expand_one_level(lag_project(G, LagLevel.ONE, 6))
        v = expand_one_level(random_one_level(rng, 6))
        assert abs(np.vdot(v, residual)) < 1e-9

        G2 = random_hermitian(rng, 6)
        residual2 = G2 - expand_two_level(lag_project(G2, LagLevel.TWO, (3, 2)))
        v2 = expand_two_level(random_two_level(rng, 3, 2))
        assert abs(np.vdot(v2, residual2)) < 1e-9


def test_psd_project_examples() -> None:
    np.testing.assert_allclose(psd_project(np.diag([1.0, -2.0])), np.diag([1.0, 0.0]), atol=1e-12)
    np.testing.assert_allclose(
        psd_project(np.array([[0.0, 1.0], [1.0, 0.0]])), np.full((2, 2), 0.5), atol=1e-12
    )


def test_psd_project_fixed_point_and_idempotence() -> None:
    rng = np.random.default_rng(3)
    A = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    P = A @ A.conj().T
    np.testing.assert_allclose(psd_project(P), P, atol=1e-10)
    G = random_hermitian(rng, 7)
    once = psd_project(G)
    assert min_eigenvalue(once) >= -1e-10
    np.testing.assert_allclose(psd_project(once), once, atol=1e-10)


def random_psd(rng: np.random.Generator, side: int) -> np.ndarray:
    w, V = np.linalg.eigh(random_hermitian(rng, side))
    return (V * np.clip(w, 0.0, None)) @ V.conj().T


@pytest.mark.parametrize("seed", range(20))
def test_psd_project_never_moves_away_from_psd_matrices(seed: int) -> None:
    rng = np.random.default_rng(seed)
    side = int(rng.integers(2, 10))
    G = 3.0 * random_hermitian(rng, side)
    projected = psd_project(G)
    np.testing.assert_allclose(psd_project(projected), projected, atol=1e-10)
    for _ in range(5):
        P = random_psd(rng, side)
        assert np.linalg.norm(projected - P) <= np.linalg.norm(G - P) + 1e-9


def test_eigenvalues_of_coupled_sized_blocks() -> None:
    rng = np.random.default_rng(65)
    T = expand_two_level(random_two_level(rng, 8, 8))
    h = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    G = np.block([[T, h[:, None]], [h.conj()[None, :], np.array([[2.5]])]])
    expected = np.linalg.eigvalsh(G)
    assert min_eigenvalue(G) == pytest.approx(expected[0], abs=1e-8)
    projected = psd_project(G)
    assert np.all(np.isfinite(projected))
    assert min_eigenvalue(projected) >= -1e-8


def test_non_finite_input_raises_numerical_error() -> None:
    G = np.eye(4, dtype=complex)
    G[1, 2] = np.nan
    with pytest.raises(NumericalError) as excinfo:
        psd_project(G)
    assert excinfo.value.side == 4 and excinfo.value.non_finite == 2
    G[1, 2] = np.inf
    with pytest.raises(NumericalError):
        min_eigenvalue(G)


def test_vandermonde_retrieve_single_atom() -> None:
    u = OneLevelLagVector(steering_vector(4, 0.25))
    found = vandermonde_retrieve(u, 1)
    np.testing.assert_allclose(found.frequencies, [0.25], atol=1e-6)
    np.testing.assert_allclose(found.powers, [1.0], atol=1e-6)
    assert not found.rank_deficient


def test_vandermonde_retrieve_two_atoms() -> None:
    u = OneLevelLagVector(steering_vector(8, 0.1) + 2.0 * steering_vector(8, 0.6))
    found = vandermonde_retrieve(u, 2)
    np.testing.assert_allclose(found.frequencies, [0.1, 0.6], atol=1e-4)
    np.testing.assert_allclose(found.powers, [1.0, 2.0], atol=1e-4)
    assert found.relative_error < 1e-6


def test_vandermonde_retrieve_flat_spectrum_is_ambiguous() -> None:
    u = OneLevelLagVector([2.0, 0.0, 0.0, 0.0])
    found = vandermonde_retrieve(u, 2)
    assert found.ambiguous
    assert np.all(found.powers >= 0)


def test_vandermonde_retrieve_rank_bounds() -> None:
    with pytest.raises(ValueError):
        vandermonde_retrieve(OneLevelLagVector([1.0, 0.0, 0.0]), 3)
