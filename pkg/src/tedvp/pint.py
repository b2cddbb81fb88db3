"""Parallel-in-time solvers: the linear clock with preconditioned CG, and parareal.

The linear clock ``R`` is block tridiagonal with diagonal blocks ``I`` (the last
one ``I/2``), sub-diagonal blocks ``-U_t/2`` and super-diagonal blocks
``-U_t^dagger/2``.  Its solution with right-hand side ``(psi0/2, 0, ..., 0)`` is
the serial trajectory with unit-norm slices.

Propagator sweeps over the time slices are split into fixed-size chunks which
are optionally farmed out to a thread pool.  Chunk boundaries do not depend on
the worker count, so results are bitwise identical for any number of workers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .linalg import DimensionError, HistoryState
from .propagators import PropagatorProvider

CHUNK = 8


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residuals):
        super().__init__(message)
        self.residuals = list(residuals)


@dataclass
class WorkCounters:
    n_fine: int = 0
    n_coarse: int = 0

    @property
    def total(self) -> int:
        return self.n_fine + self.n_coarse


class LinearClock:
    """Matrix-free linear clock over a propagator provider."""

    def __init__(self, provider: PropagatorProvider, workers: int = 1):
        if provider.n_times < 2:
            raise ValueError("the linear clock needs T >= 2")
        self.provider = provider
        self.workers = max(1, int(workers))

    @property
    def n_times(self) -> int:
        return self.provider.n_times

    @property
    def dim(self) -> int:
        return self.provider.dim

    def _sweep(self, method: str, X: np.ndarray) -> np.ndarray:
        """Apply every link (forward or adjoint) to the matching row of ``X``."""
        fn = getattr(self.provider, method)
        n = X.shape[0]
        bounds = [(a, min(a + CHUNK, n)) for a in range(0, n, CHUNK)]
        out = np.empty_like(X)

        def run(ab):
            a, b = ab
            out[a:b] = fn(np.arange(a, b), np.ascontiguousarray(X[a:b]))

        if self.workers == 1 or len(bounds) == 1:
            for ab in bounds:
                run(ab)
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                list(pool.map(run, bounds))
        return out

    def apply_slices(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.complex128)
        if X.shape != (self.n_times, self.dim):
            raise DimensionError(f"expected a ({self.n_times}, {self.dim}) array, got {X.shape}")
        fwd = self._sweep("apply_batch", X[:-1])
        bwd = self._sweep("apply_adjoint_batch", X[1:])
        out = X.copy()
        out[-1] *= 0.5
        out[1:] -= 0.5 * fwd
        out[:-1] -= 0.5 * bwd
        return out

    def to_dense(self) -> np.ndarray:
        T, N = self.n_times, self.dim
        cols = []
        for j in range(T * N):
            e = np.zeros(T * N, dtype=np.complex128)
            e[j] = 1.0
            cols.append(self.apply_slices(e.reshape(T, N)).reshape(-1))
        return np.column_stack(cols)


def apply_linear_clock(R: LinearClock, phi: HistoryState) -> HistoryState:
    if (phi.n_times, phi.dim) != (R.n_times, R.dim):
        raise DimensionError(f"history state is {phi.n_times}x{phi.dim}, clock is {R.n_times}x{R.dim}")
    return HistoryState.from_slices(R.apply_slices(phi.slices))


def rhs_initial(psi0, n_times: int) -> HistoryState:
    psi0 = np.asarray(psi0, dtype=np.complex128).reshape(-1)
    out = np.zeros((n_times, psi0.size), dtype=np.complex128)
    out[0] = 0.5 * psi0
    return HistoryState.from_slices(out)


def scalar_kernel(n_times: int) -> np.ndarray:
    """The real T x T matrix A with R unitarily equivalent to A (x) I."""
    A = np.eye(n_times) - 0.5 * (np.eye(n_times, k=1) + np.eye(n_times, k=-1))
    A[-1, -1] = 0.5
    return A


@lru_cache(maxsize=64)
def _kernel_cholesky(n_times: int) -> tuple[np.ndarray, np.ndarray]:
    L = np.linalg.cholesky(scalar_kernel(n_times))
    return np.diag(L).copy(), np.diag(L, k=-1).copy()


def _coarse_solve_slices(Rc: LinearClock, B: np.ndarray) -> np.ndarray:
    T = Rc.n_times
    diag, sub = _kernel_cholesky(T)
    prov = Rc.provider
    y = np.empty_like(B)
    y[0] = B[0] / diag[0]
    for t in range(T - 1):
        y[t + 1] = (B[t + 1] - sub[t] * prov.apply(t, y[t])) / diag[t + 1]
    x = np.empty_like(B)
    x[-1] = y[-1] / diag[-1]
    for t in range(T - 2, -1, -1):
        x[t] = (y[t] - sub[t] * prov.apply_adjoint(t, x[t + 1])) / diag[t]
    return x


def coarse_solve(Rc: LinearClock, b: HistoryState) -> HistoryState:
    """Exact solve of ``Rc x = b`` by block forward/backward substitution.

    Uses ``T-1`` forward and ``T-1`` adjoint link applications.
    """
    if (b.n_times, b.dim) != (Rc.n_times, Rc.dim):
        raise DimensionError("right-hand side does not match the clock")
    return HistoryState.from_slices(_coarse_solve_slices(Rc, b.slices))


@dataclass
class CGResult:
    solution: HistoryState
    counters: WorkCounters
    residuals: list[float]
    iterations: int

    @property
    def trajectory(self) -> np.ndarray:
        X = self.solution.slices
        return X / np.linalg.norm(X, axis=1, keepdims=True)


def cg_solve(
    Rf: LinearClock,
    rhs: HistoryState,
    tol: float = 1e-8,
    precond: LinearClock | None = None,
    max_iter: int | None = None,
    callback=None,
) -> CGResult:
    """(Preconditioned) conjugate gradient on ``Rf x = rhs`` from a zero guess.

    Stops when ``||rhs - Rf x|| <= tol ||rhs||``.  ``n_fine`` counts
    applications of ``Rf`` and ``n_coarse`` preconditioner solves.
    ``callback(k, x)`` is called after every iteration with the current
    iterate as a ``(T, N)`` array.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    T = Rf.n_times
    cap = 4 * T if max_iter is None else max_iter
    counters = WorkCounters()
    b = rhs.slices
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    if bnorm == 0:
        return CGResult(HistoryState.from_slices(x), counters, [0.0], 0)
    r = b.copy()
    residuals = [1.0]

    def prec(v):
        if precond is None:
            return v.copy()
        counters.n_coarse += 1
        return _coarse_solve_slices(precond, v)

    z = prec(r)
    p = z.copy()
    rz = np.vdot(r, z).real
    k = 0
    while True:
        if k >= cap:
            raise ConvergenceError(f"CG did not reach tol={tol:g} in {cap} iterations", residuals)
        k += 1
        Ap = Rf.apply_slices(p)
        counters.n_fine += 1
        alpha = rz / np.vdot(p, Ap).real
        x += alpha * p
        r -= alpha * Ap
        residuals.append(float(np.linalg.norm(r) / bnorm))
        if callback is not None:
            callback(k, x)
        if residuals[-1] <= tol:
            break
        z = prec(r)
        rz_new = np.vdot(r, z).real
        p = z + (rz_new / rz) * p
        rz = rz_new
    return CGResult(HistoryState.from_slices(x), counters, residuals, k)


@dataclass
class PararealResult:
    trajectory: np.ndarray
    counters: WorkCounters
    iterations: int
    converged: bool
    diverged: bool
    updates: list[float] = field(default_factory=list)


def parareal_solve(
    fine: PropagatorProvider,
    coarse: PropagatorProvider,
    psi0,
    tol: float,
    workers: int = 1,
    max_iter: int | None = None,
    callback=None,
) -> PararealResult:
    """Parareal predictor-corrector over the links of ``fine``/``coarse``.

    ``n_coarse`` counts serial coarse sweeps (the initial prediction included),
    ``n_fine`` parallel fine sweeps.  Stops when the largest slice update is
    at most ``tol``, after ``T-1`` iterations (exact by construction), or when
    the update grows in two consecutive iterations (``diverged``).
    ``callback(k, lam)`` sees the iterate after every correction.
    """
    if fine.n_times != coarse.n_times or fine.dim != coarse.dim:
        raise DimensionError("fine and coarse providers must share T and N")
    T = fine.n_times
    cap = T - 1 if max_iter is None else min(max_iter, T - 1)
    sweeper = LinearClock(fine, workers)
    counters = WorkCounters()
    lam = np.empty((T, fine.dim), dtype=np.complex128)
    lam[0] = psi0
    G = np.empty((T - 1, fine.dim), dtype=np.complex128)
    for t in range(T - 1):
        G[t] = coarse.apply(t, lam[t])
        lam[t + 1] = G[t]
    counters.n_coarse += 1
    updates: list[float] = []
    growth = 0
    converged = diverged = False
    k = 0
    while k < cap:
        k += 1
        F = sweeper._sweep("apply_batch", lam[:-1])
        counters.n_fine += 1
        new = np.empty_like(lam)
        new[0] = lam[0]
        for t in range(T - 1):
            g = coarse.apply(t, new[t])
            new[t + 1] = g + F[t] - G[t]
            G[t] = g
        counters.n_coarse += 1
        upd = float(np.max(np.linalg.norm(new - lam, axis=1)))
        lam = new
        if callback is not None:
            callback(k, lam)
        if updates and upd > updates[-1]:
            growth += 1
        else:
            growth = 0
        updates.append(upd)
        if upd <= tol:
            converged = True
            break
        if growth >= 2:
            diverged = True
            break
    else:
        converged = k >= T - 1
    return PararealResult(lam, counters, k, converged, diverged, updates)


def speedup_clock(c: WorkCounters, n_times: int) -> float:
    if c.total == 0:
        raise ValueError("no work recorded")
    return n_times / (2 * c.total)


def speedup_parareal(c: WorkCounters, n_times: int) -> float:
    if c.total == 0:
        raise ValueError("no work recorded")
    return n_times / c.total


def speedup_estimates(c: WorkCounters, n_times: int, kind: str) -> float:
    """``kind`` is ``"clock"`` or ``"parareal"``."""
    if kind == "clock":
        return speedup_clock(c, n_times)
    if kind == "parareal":
        return speedup_parareal(c, n_times)
    raise ValueError(f"unknown solver kind {kind!r}")
