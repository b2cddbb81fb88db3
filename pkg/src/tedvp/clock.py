"""Clock Hamiltonian, history states and the discrete action.

The clock acts on the time-major system-time space of dimension ``N*T``.  Each
link ``t -> t+1`` contributes the blocks ``I`` at (t, t) and (t+1, t+1),
``-U_t`` at (t+1, t) and ``-U_t^dagger`` at (t, t+1).  The default form
multiplies the link sum by one half; the unscaled form is available through
``half_scaled=False``.  An optional penalty ``(I - |psi0><psi0|)`` on the
(0, 0) block pins the initial state.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import (
    DimensionError,
    HermitianOperator,
    HistoryState,
    as_state,
    hermitian_eig_lowest,
    hermitian_spectrum,
)
from .propagators import PropagatorProvider

DEGENERACY_GAP = 1e-10


class DegenerateGroundStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class ClockEigenProblem:
    propagators: PropagatorProvider
    penalty_state: np.ndarray | None = None
    half_scaled: bool = True

    def __post_init__(self):
        if self.propagators.n_times < 2:
            raise ValueError("the clock needs T >= 2")
        if self.penalty_state is not None:
            psi0 = as_state(self.penalty_state)
            if psi0.size != self.dim:
                raise DimensionError(f"penalty state has length {psi0.size}, expected {self.dim}")
            object.__setattr__(self, "penalty_state", psi0 / np.linalg.norm(psi0))

    @property
    def n_times(self) -> int:
        return self.propagators.n_times

    @property
    def dim(self) -> int:
        return self.propagators.dim

    @property
    def scale(self) -> float:
        return 0.5 if self.half_scaled else 1.0


def build_history_state(slices) -> HistoryState:
    """(1/sqrt(T)) sum_t |psi_t> (x) |t>."""
    if len(slices) == 0:
        raise ValueError("need at least one slice")
    vs = [as_state(s) for s in slices]
    if len({v.size for v in vs}) != 1:
        raise DimensionError("slices have mixed dimensions")
    for v in vs:
        if abs(np.vdot(v, v).real - 1.0) > 1e-10:
            raise ValueError("every slice must be normalized")
    arr = np.stack(vs) / np.sqrt(len(vs))
    return HistoryState.from_slices(arr)


def extract_state(phi: HistoryState, t: int) -> np.ndarray:
    """sqrt(T) <t|Phi>."""
    if not 0 <= t < phi.n_times:
        raise IndexError(f"time index {t} outside [0, {phi.n_times})")
    return np.sqrt(phi.n_times) * phi.slice(t)


def _link_matrices(provider: PropagatorProvider) -> np.ndarray:
    if hasattr(provider, "unitaries"):
        return np.asarray(provider.unitaries)
    eye = np.eye(provider.dim, dtype=np.complex128)
    # row j of apply_batch(eye) is U e_j, i.e. column j of U
    return np.stack([provider.apply_batch([t] * provider.dim, eye).T for t in range(provider.n_links)])


def assemble_clock(p: ClockEigenProblem) -> HermitianOperator:
    T, N, s = p.n_times, p.dim, p.scale
    U = _link_matrices(p.propagators)
    if U.shape != (T - 1, N, N):
        raise DimensionError(f"provider supplied links of shape {U.shape}")
    M = np.zeros((T, N, T, N), dtype=np.complex128)
    eye = np.eye(N)
    for t in range(T - 1):
        M[t, :, t, :] += s * eye
        M[t + 1, :, t + 1, :] += s * eye
        M[t + 1, :, t, :] -= s * U[t]
        M[t, :, t + 1, :] -= s * U[t].conj().T
    if p.penalty_state is not None:
        psi0 = p.penalty_state
        M[0, :, 0, :] += eye - np.outer(psi0, psi0.conj())
    return HermitianOperator(M.reshape(T * N, T * N))


def apply_clock(p: ClockEigenProblem, phi: HistoryState, penalty: bool = True) -> HistoryState:
    """Matrix-free action of the clock on a history state."""
    T, N, s = p.n_times, p.dim, p.scale
    if (phi.n_times, phi.dim) != (T, N):
        raise DimensionError(f"history state is {phi.n_times}x{phi.dim}, clock is {T}x{N}")
    X = phi.slices
    links = np.arange(T - 1)
    fwd = p.propagators.apply_batch(links, X[:-1])
    bwd = p.propagators.apply_adjoint_batch(links, X[1:])
    out = np.zeros((T, N), dtype=np.complex128)
    out[:-1] += X[:-1] - bwd
    out[1:] += X[1:] - fwd
    out *= s
    if penalty and p.penalty_state is not None:
        psi0 = p.penalty_state
        out[0] += X[0] - psi0 * np.vdot(psi0, X[0])
    return HistoryState.from_slices(out)


def tedvp_action(phi: HistoryState, p: ClockEigenProblem) -> float:
    """<Phi|H_clock|Phi> with the penalty term left out."""
    return float(np.vdot(phi.data, apply_clock(p, phi, penalty=False).data).real)


def clock_ground_trajectory(p: ClockEigenProblem) -> tuple[float, np.ndarray]:
    """Lowest eigenpair of the assembled clock and the per-slice normalized states.

    The returned trajectory has shape ``(T, N)``; one global phase is chosen so
    that the largest amplitude of slice 0 is real and positive.
    """
    H = assemble_clock(p)
    if p.penalty_state is None and p.dim > 1:
        w = hermitian_spectrum(H)
        if w[1] - w[0] < DEGENERACY_GAP:
            raise DegenerateGroundStateError(
                f"ground space is degenerate (gap {w[1] - w[0]:.2e}); add a penalty state"
            )
    energy, vec = hermitian_eig_lowest(H, 1)[0]
    phi = HistoryState(vec, p.n_times, p.dim)
    traj = np.stack([extract_state(phi, t) for t in range(p.n_times)])
    norms = np.linalg.norm(traj, axis=1)
    traj = traj / np.where(norms > 0, norms, 1.0)[:, None]
    j = int(np.argmax(np.abs(traj[0])))
    traj = traj * (abs(traj[0, j]) / traj[0, j])
    return energy, traj
