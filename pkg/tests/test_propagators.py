import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tedvp.linalg import matrix_exponential_unitary
from tedvp.propagators import (
    BOHR_PER_ANGSTROM,
    CountingProvider,
    DenseProvider,
    MorseModel,
    SoftProvider,
    etrs_provider,
    etrs_step,
    gaussian_packet,
    make_fine_coarse,
    random_unitaries,
    serial_propagate,
    soft_propagate,
    soft_step,
)
from tedvp.spin import SpinModelParams, vanadium_hamiltonian

from conftest import random_hermitian, random_state

MODEL = MorseModel()


def packet():
    return gaussian_packet(MODEL, -0.1 * BOHR_PER_ANGSTROM)


def test_etrs_collapses_for_static_h(rng):
    H = random_hermitian(rng, 6)
    assert np.abs(etrs_step(H, H, 0.05) - matrix_exponential_unitary(H, 0.05)).max() < 1e-12
    Z = np.zeros((4, 4))
    assert np.abs(etrs_step(Z, Z, 0.3) - np.eye(4)).max() < 1e-15


def time_ordered_oracle(hamiltonian, t, dt, substeps=4000):
    """Midpoint-exponential product on a fine sub-grid (error O(dt^3 / substeps^2))."""
    h = dt / substeps
    U = np.eye(8, dtype=complex)
    for j in range(substeps):
        U = matrix_exponential_unitary(hamiltonian(t + (j + 0.5) * h), h) @ U
    return U


def test_etrs_local_error_third_order():
    p = SpinModelParams()
    ham = lambda t: vanadium_hamiltonian(p, t)
    t = 0.7
    errs = []
    for dt in (0.02, 0.01):
        exact = time_ordered_oracle(ham, t, dt, substeps=400)
        errs.append(np.linalg.norm(etrs_step(ham(t), ham(t + dt), dt) - exact, 2))
    assert 6.5 < errs[0] / errs[1] < 9.5


def test_soft_dt_zero_is_identity():
    psi = packet()
    assert np.array_equal(soft_step(MODEL, 0.0, psi), psi)


def test_soft_free_gaussian_matches_analytic():
    free = MorseModel(depth=0.0, n_grid=512, x_min=-10.0, x_max=10.0)
    m, s2, x0, dt = free.mass, 0.5, 0.3, 5.0
    x = free.x

    def analytic(t):
        a = 1 + 1j * t / (m * s2)
        return (np.pi * s2) ** -0.25 / np.sqrt(a) * np.exp(-((x - x0) ** 2) / (2 * s2 * a)) * np.sqrt(free.dx)

    psi0 = analytic(0.0)
    assert abs(np.linalg.norm(psi0) - 1) < 1e-12
    assert np.abs(soft_step(free, dt, psi0) - analytic(dt)).max() < 1e-10


def test_soft_norm_conservation():
    psi = packet()
    out = soft_propagate(MODEL, 0.015, psi, 10_000)
    assert abs(np.linalg.norm(out) - 1) < 1e-8
    one = soft_step(MODEL, 0.015, psi)
    assert abs(np.linalg.norm(one) - 1) < 1e-12


def test_soft_local_error_slope():
    H = MODEL.dense_hamiltonian()
    psi = packet()
    dts = [0.03, 0.015, 0.0075, 0.00375]
    errs = [np.linalg.norm(soft_step(MODEL, dt, psi) - matrix_exponential_unitary(H, dt) @ psi) for dt in dts]
    slope = np.polyfit(np.log2(dts), np.log2(errs), 1)[0]
    assert abs(slope - 3.0) <= 0.3


def test_soft_richardson_slope():
    # one step of dt against two steps of dt/2: the difference is a local-error estimate
    psi = packet()
    dts = [0.03, 0.015, 0.0075, 0.00375]
    diffs = [np.linalg.norm(soft_step(MODEL, dt, psi) - soft_propagate(MODEL, dt / 2, psi, 2)) for dt in dts]
    slope = np.polyfit(np.log2(dts), np.log2(diffs), 1)[0]
    assert abs(slope - 3.0) <= 0.3


def test_energy_conservation_long_run():
    psi = packet()
    e0 = MODEL.energy(psi)
    out = soft_propagate(MODEL, 0.015, psi, 60_000)  # 900 a.u.
    assert abs(MODEL.energy(out) - e0) <= 1e-6 * abs(e0)


def test_fine_coarse_k1_identical(rng):
    fine, coarse = make_fine_coarse(MODEL, 0.015, 1, 3)
    psi = random_state(rng, MODEL.n_grid)
    assert np.abs(fine.apply(0, psi) - coarse.apply(0, psi)).max() < 1e-12


def test_fine_coarse_difference_is_local_third_order():
    psi = packet()
    diffs = []
    for dt in (0.015, 0.0075):
        fine, coarse = make_fine_coarse(MODEL, dt, 10, 2)
        diffs.append(np.linalg.norm(fine.apply(0, psi) - coarse.apply(0, psi)))
    assert diffs[1] > 0
    assert 6.0 < diffs[0] / diffs[1] < 10.0


def test_fine_adjoint_round_trip(rng):
    fine, coarse = make_fine_coarse(MODEL, 0.015, 10, 3)
    psi = random_state(rng, MODEL.n_grid)
    for prov in (fine, coarse):
        assert np.abs(prov.apply_adjoint(1, prov.apply(1, psi)) - psi).max() < 1e-10
        assert abs(np.linalg.norm(prov.apply(0, psi)) - 1) < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_dense_provider_unitarity(T, N, seed):
    rng = np.random.default_rng(seed)
    prov = DenseProvider(random_unitaries(rng, T - 1, N))
    x = random_state(rng, N)
    for t in range(T - 1):
        y = prov.apply(t, x)
        assert abs(np.linalg.norm(y) - 1) < 1e-10
        assert np.abs(prov.apply_adjoint(t, y) - x).max() < 1e-10


def test_counting_provider(rng):
    prov = CountingProvider(DenseProvider(random_unitaries(rng, 3, 2)))
    serial_propagate(prov, [1, 0])
    assert prov.forward_count == 3 and prov.adjoint_count == 0


def test_etrs_provider_grid_times():
    p = SpinModelParams()
    prov = etrs_provider(lambda t: vanadium_hamiltonian(p, t), 0.2, 0.01, 4)
    ref = etrs_step(vanadium_hamiltonian(p, 0.22), vanadium_hamiltonian(p, 0.23), 0.01)
    assert np.abs(prov.matrix(2) - ref).max() == 0


def test_gaussian_packet_examples():
    assert abs(MODEL.omega - 1.7715e-2) < 1e-5
    assert abs(0.9374 * np.sqrt(2 * 0.164 / 918.5) - MODEL.omega) < 1e-15
    centred = gaussian_packet(MODEL, 0.0)
    assert abs(MODEL.position_mean(centred)) < MODEL.dx
    assert abs(MODEL.position_mean(packet()) + 0.18897) < MODEL.dx
    assert abs(np.linalg.norm(packet()) - 1) < 1e-14


def test_potential_minimum_on_grid():
    j = int(np.argmin(MODEL.potential))
    assert abs(MODEL.x[j]) < MODEL.dx
    assert abs(MODEL.potential[j] + MODEL.depth) < 1e-12


def test_grid_too_small_rejected():
    # the narrow interval [-0.8, 3.2] leaves the displaced packet visibly non-zero at the edge
    with pytest.raises(ValueError, match="widen"):
        gaussian_packet(MorseModel(x_min=-0.8, x_max=3.2), -0.1 * BOHR_PER_ANGSTROM)


def test_model_validation():
    with pytest.raises(ValueError):
        MorseModel(n_grid=100)
    with pytest.raises(ValueError):
        MorseModel(mass=-1.0)


def test_soft_provider_batch_matches_single(rng):
    prov = SoftProvider(MODEL, 0.015, 3, 4)
    X = np.stack([random_state(rng, MODEL.n_grid) for _ in range(3)])
    batch = prov.apply_batch(np.arange(3), X)
    for t in range(3):
        assert np.abs(batch[t] - prov.apply(t, X[t])).max() < 1e-14
