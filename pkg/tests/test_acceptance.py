"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line."""
import time
from pathlib import Path

import numpy as np
import pytest

from tedvp.cli import main
from tedvp.clock import ClockEigenProblem, assemble_clock, clock_ground_trajectory
from tedvp.experiments import run_floquet_demo, run_h2_pint, run_norm_metrics, run_spin_ci
from tedvp.linalg import fidelity, hermitian_eig_lowest, hermitian_spectrum
from tedvp.pint import LinearClock, cg_solve, coarse_solve, parareal_solve, rhs_initial
from tedvp.propagators import (
    BOHR_PER_ANGSTROM,
    CountingProvider,
    DenseProvider,
    MorseModel,
    etrs_provider,
    gaussian_packet,
    identity_provider,
    make_fine_coarse,
    random_unitaries,
    serial_propagate,
    soft_step,
)
from tedvp.linalg import HistoryState, matrix_exponential_unitary
from tedvp.spin import SpinModelParams, product_state, random_product_state, vanadium_hamiltonian

from conftest import random_state, record

MORSE = MorseModel()


def morse_packet():
    return gaussian_packet(MORSE, -0.1 * BOHR_PER_ANGSTROM)


def test_criterion_01_clock_eigenvalue_zero():
    start = time.perf_counter()
    p = SpinModelParams()
    prov = etrs_provider(lambda t: vanadium_hamiltonian(p, t), 0.0, 0.01, 16)
    psi0 = product_state(random_product_state(np.random.default_rng(0)))
    problem = ClockEigenProblem(prov, penalty_state=psi0)
    lam0 = hermitian_eig_lowest(assemble_clock(problem), 1)[0][0]
    _, traj = clock_ground_trajectory(problem)
    serial = serial_propagate(prov, psi0)
    worst = min(fidelity(traj[t], serial[t]) for t in range(16))
    elapsed = time.perf_counter() - start
    ok = abs(lam0) <= 1e-10 and worst >= 1 - 1e-8 and elapsed < 10
    record(1, ok, f"|lambda0|={abs(lam0):.2e}, min fidelity 1-{1 - worst:.1e}, {elapsed:.2f}s")
    assert ok


def test_criterion_02_spectrum_law():
    rng = np.random.default_rng(2)
    failures = []
    for T in range(3, 9):
        for N in (2, 4):
            w = hermitian_spectrum(LinearClock(DenseProvider(random_unitaries(rng, T - 1, N))).to_dense())
            w0 = hermitian_spectrum(LinearClock(identity_provider(T, N)).to_dense())
            clusters = np.split(w, np.nonzero(np.diff(w) > 1e-8)[0] + 1)
            if len(clusters) != T or any(len(c) != N for c in clusters) or np.abs(w - w0).max() > 1e-8:
                failures.append((T, N))
    record(2, not failures, f"12 (T,N) cases, failing: {failures}")
    assert not failures


def test_criterion_03_cg_bound():
    rng = np.random.default_rng(3)
    worst = 0
    bad = []
    for i in range(50):
        T, N = int(rng.integers(2, 33)), int(rng.integers(1, 33))
        R = LinearClock(DenseProvider(random_unitaries(rng, T - 1, N)))
        res = cg_solve(R, rhs_initial(random_state(rng, N), T), tol=1e-10)
        worst = max(worst, res.iterations - T)
        if res.iterations > T + 2 or res.residuals[-1] > 1e-10:
            bad.append((T, N, res.iterations))
    record(3, not bad, f"50 instances, max(iterations - T) = {worst}, violations: {bad}")
    assert not bad


def test_criterion_04_preconditioner_exactness():
    rng = np.random.default_rng(4)
    worst, bad_counts = 0.0, 0
    for _ in range(100):
        T, N = int(rng.integers(2, 17)), int(rng.integers(1, 9))
        prov = CountingProvider(DenseProvider(random_unitaries(rng, T - 1, N)))
        Rc = LinearClock(prov)
        b = HistoryState(rng.standard_normal(T * N) + 1j * rng.standard_normal(T * N), T, N)
        x = coarse_solve(Rc, b)
        if prov.forward_count != T - 1 or prov.adjoint_count != T - 1:
            bad_counts += 1
        prov.reset()
        worst = max(worst, np.linalg.norm(Rc.apply_slices(x.slices) - b.slices) / b.norm())
    ok = worst <= 1e-10 and bad_counts == 0
    record(4, ok, f"max relative residual {worst:.2e}, wrong application counts in {bad_counts} of 100")
    assert ok


def test_criterion_05_parareal_exactness():
    T = 8
    fine, coarse = make_fine_coarse(MORSE, 0.015, T, T)
    psi0 = morse_packet()
    ref = serial_propagate(fine, psi0)
    errs = {}
    parareal_solve(fine, coarse, psi0, tol=0.0, callback=lambda k, lam: errs.__setitem__(k, np.abs(lam[: k + 1] - ref[: k + 1]).max()))
    worst = max(errs.values())
    ok = sorted(errs) == list(range(1, T)) and worst <= 1e-12
    record(5, ok, f"iterations 1..{max(errs)}, max deviation of settled slices {worst:.1e}")
    assert ok


@pytest.mark.slow
def test_criterion_06_speedup_crossover():
    start = time.perf_counter()
    out = run_h2_pint({})
    elapsed = time.perf_counter() - start
    check = out.checks[0]
    ok = check.passed and elapsed < 300
    record(6, ok, f"{check.detail}; {elapsed:.0f}s")
    assert ok


def test_criterion_07_ci_ordering():
    start = time.perf_counter()
    out = run_spin_ci({})
    elapsed = time.perf_counter() - start
    checks = {c.name: c for c in out.checks}
    ok = all(c.passed for c in out.checks) and elapsed < 60
    detail = "; ".join(f"{c.name}={'ok' if c.passed else 'FAIL'} ({c.detail})" for c in out.checks)
    record(7, ok, f"{detail}; {elapsed:.1f}s")
    assert checks["fci_equals_exact"].passed
    assert ok


def test_criterion_08_soft_order():
    H = MORSE.dense_hamiltonian()
    psi = morse_packet()
    dts = [0.03, 0.015, 0.0075, 0.00375]
    errs = [np.linalg.norm(soft_step(MORSE, dt, psi) - matrix_exponential_unitary(H, dt) @ psi) for dt in dts]
    slope = float(np.polyfit(np.log2(dts), np.log2(errs), 1)[0])
    ok = abs(slope - 3.0) <= 0.3
    record(8, ok, f"local-error slope {slope:.3f}")
    assert ok


def test_criterion_09_metric_agreement():
    out = run_norm_metrics({})
    names = ("gap_slope", "peaks_coincide", "large_step_gap", "n1_plateau")
    parts = [c for c in out.checks if c.name.split("_", 1)[1] in names]
    ok = all(c.passed for c in parts)
    record(9, ok, "; ".join(f"{c.name}: {c.detail}" for c in parts))
    assert ok


def test_criterion_10_norm_conservation():
    out = run_norm_metrics({})
    parts = [c for c in out.checks if c.name.endswith(("mvp_norm", "prenorm_below_one"))]
    ok = all(c.passed for c in parts)
    record(10, ok, "; ".join(f"{c.name}: {c.detail}" for c in parts))
    assert ok


def test_criterion_11_floquet():
    out = run_floquet_demo({})
    ok = out.passed
    record(11, ok, "; ".join(f"{c.name}: {c.detail}" for c in out.checks))
    assert ok


@pytest.mark.slow
def test_criterion_12_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["--seed", "0", "--out", str(a), "selfcheck"])
    main(["--seed", "0", "--workers", "4", "--out", str(b), "selfcheck"])
    files = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
    other = sorted(p.relative_to(b) for p in b.rglob("*.csv"))
    differing = [str(f) for f in files if (a / f).read_bytes() != (b / f).read_bytes()]
    ok = bool(files) and files == other and not differing
    record(12, ok, f"{len(files)} CSV files compared (1 vs 4 workers), differing: {differing}")
    assert ok
