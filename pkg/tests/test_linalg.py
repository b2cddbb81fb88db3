import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tedvp.linalg import (
    DimensionError,
    HermitianOperator,
    HistoryState,
    align_phase,
    hermitian_eig_lowest,
    hermitian_spectrum,
    inner,
    matrix_exponential_unitary,
)
from tedvp.spin import SpinModelParams, vanadium_hamiltonian

from conftest import random_hermitian, random_state


def taylor_expm(A, terms=30):
    """Scaling-and-squaring with a truncated Taylor series (independent oracle)."""
    nrm = np.abs(A).sum(axis=1).max()
    s = max(0, int(math.ceil(math.log2(nrm))) + 1) if nrm > 0 else 0
    B = A / 2**s
    out = np.eye(A.shape[0], dtype=complex)
    term = np.eye(A.shape[0], dtype=complex)
    for k in range(1, terms):
        term = term @ B / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def test_inner_examples():
    assert inner([1, 0], [1, 0]) == 1
    assert inner([1, 0], [0, 1]) == 0
    x = np.array([1 + 1j, 0]) / np.sqrt(2)
    assert abs(inner(x, [1, 0]) - (1 - 1j) / np.sqrt(2)) < 1e-15


def test_inner_dimension_mismatch():
    with pytest.raises(DimensionError):
        inner([1, 0], [1, 0, 0])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 16), st.integers(0, 2**31 - 1))
def test_cauchy_schwarz(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    y = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    assert abs(inner(x, y)) ** 2 <= inner(x, x).real * inner(y, y).real + 1e-12


def test_eig_lowest_diagonal():
    (w, v), = hermitian_eig_lowest(np.diag([0.0, 1.0]), 1)
    assert w == 0.0
    assert abs(abs(v[0]) - 1) < 1e-15


def test_eig_lowest_scalar_clock_kernel():
    A = 0.5 * np.array([[1, -1], [-1, 1]])
    (w0, v0), (w1, v1) = hermitian_eig_lowest(A, 2)
    assert abs(w0) < 1e-15 and abs(w1 - 1) < 1e-15
    assert abs(abs(np.vdot(v0, [1, 1])) / np.sqrt(2) - 1) < 1e-12
    assert abs(abs(np.vdot(v1, [1, -1])) / np.sqrt(2) - 1) < 1e-12


def test_eig_lowest_matches_full_factorization(rng):
    A = random_hermitian(rng, 8)
    w, V = np.linalg.eig(A)
    assert np.abs(A - (V * w) @ np.linalg.inv(V)).max() < 1e-10
    ref = np.sort(w.real)
    pairs = hermitian_eig_lowest(A, 8)
    assert np.allclose([p[0] for p in pairs], ref, atol=1e-10)
    vecs = np.column_stack([p[1] for p in pairs])
    assert np.abs(vecs.conj().T @ vecs - np.eye(8)).max() < 1e-10


def test_eig_lowest_k_too_large():
    with pytest.raises(DimensionError):
        hermitian_eig_lowest(np.eye(3), 4)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 64), st.integers(0, 2**31 - 1))
def test_eig_residuals(n, seed):
    A = random_hermitian(np.random.default_rng(seed), n)
    norm = np.linalg.norm(A, 2)
    k = min(n, 4)
    for w, v in hermitian_eig_lowest(A, k):
        assert np.linalg.norm(A @ v - w * v) <= 1e-9 * norm


def test_matrix_free_operator_materializes(rng):
    A = random_hermitian(rng, 6)
    op = HermitianOperator(apply=lambda x: A @ x, dim=6)
    assert np.allclose(op.to_dense(), A)
    assert np.allclose(hermitian_spectrum(op), np.linalg.eigvalsh(A))
    x, y = random_state(rng, 6), random_state(rng, 6)
    assert abs(np.vdot(x, op @ y) - np.vdot(op @ x, y)) < 1e-10


def test_expm_examples():
    assert np.allclose(matrix_exponential_unitary(np.zeros((3, 3)), 0.7), np.eye(3), atol=1e-15)
    U = matrix_exponential_unitary(np.diag([1.0, -1.0]), np.pi)
    assert np.abs(U + np.eye(2)).max() < 1e-12


def test_expm_vanadium_against_taylor_oracle():
    H = vanadium_hamiltonian(SpinModelParams(), 0.3)
    U = matrix_exponential_unitary(H, 0.01)
    assert np.abs(U - taylor_expm(-1j * 0.01 * H)).max() < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 32), st.floats(-5, 5), st.integers(0, 2**31 - 1))
def test_expm_unitary(n, dt, seed):
    U = matrix_exponential_unitary(random_hermitian(np.random.default_rng(seed), n), dt)
    assert np.abs(U.conj().T @ U - np.eye(n)).max() <= 1e-12


def test_history_state_layout():
    s = np.arange(6).reshape(3, 2)
    h = HistoryState.from_slices(s)
    assert h.n_times == 3 and h.dim == 2
    assert np.array_equal(h.slice(1), [2, 3])
    assert np.array_equal(h.data, np.arange(6))
    with pytest.raises(ValueError):
        h.data[0] = 1
    with pytest.raises(DimensionError):
        HistoryState(np.zeros(5), 2, 3)


def test_align_phase():
    x = np.array([0.1, -2j, 0.3])
    y = align_phase(x)
    assert abs(y[1] - 2) < 1e-15
    assert abs(np.vdot(x, y)) == pytest.approx(np.vdot(x, x).real)
