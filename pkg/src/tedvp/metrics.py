"""Truncation-error metrics and the projected-unitary vs projected-Hamiltonian harness.

``N1 = 1 - ||P U P psi||^2`` is the norm lost by one projected step of the
exact propagator.  ``N2 = ||(H - P H P) psi||^2 dt^2`` is its first-order
estimate from the coupling out of the subspace.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import DimensionError, matrix_exponential_unitary
from .spin import local_frame, excitation_patterns, factor_product_state, product_state


class ProjectionSpace:
    """Subspace spanned by the orthonormal columns of ``basis`` (shape ``(N, r)``)."""

    def __init__(self, basis, check: bool = True):
        Q = np.asarray(basis, dtype=np.complex128)
        if Q.ndim != 2 or Q.shape[1] > Q.shape[0]:
            raise DimensionError(f"basis must be (N, r) with r <= N, got {Q.shape}")
        if check:
            gram = Q.conj().T @ Q
            if np.abs(gram - np.eye(Q.shape[1])).max() > 1e-10:
                raise ValueError("basis columns are not orthonormal")
        self.basis = Q

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.basis @ (self.basis.conj().T @ x)

    def matrix(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T

    @classmethod
    def full(cls, dim: int) -> "ProjectionSpace":
        return cls(np.eye(dim, dtype=np.complex128), check=False)


def excitation_space(psi0, level: int) -> ProjectionSpace:
    """Excitations (up to ``level`` flipped spins) of a product initial state.

    The local frames are fixed by the initial state and do not move in time.
    """
    factors = factor_product_state(psi0)
    frames = [local_frame(phi) for phi in factors]
    cols = [
        product_state([frames[i][:, n] for i, n in enumerate(pat)])
        for pat in excitation_patterns(len(frames), level)
    ]
    return ProjectionSpace(np.column_stack(cols))


def norm_loss_instant(P: ProjectionSpace, U: np.ndarray, psi: np.ndarray) -> float:
    v = P.apply(U @ P.apply(psi))
    return float(1.0 - np.vdot(v, v).real)


def norm_loss_perturbative(P: ProjectionSpace, H: np.ndarray, psi: np.ndarray, dt: float) -> float:
    v = H @ psi - P.apply(H @ P.apply(psi))
    return float(np.vdot(v, v).real * dt * dt)


def find_peaks(series, factor: float = 10.0) -> np.ndarray:
    """Indices of interior local maxima exceeding ``factor`` times the median."""
    s = np.asarray(series, dtype=float)
    if s.size < 3:
        return np.array([], dtype=int)
    thresh = factor * np.median(s)
    interior = (s[1:-1] > s[:-2]) & (s[1:-1] >= s[2:]) & (s[1:-1] > thresh)
    return np.nonzero(interior)[0] + 1


@dataclass(frozen=True)
class Comparison:
    tedvp: np.ndarray  # (T, N) renormalized projected-unitary trajectory
    mvp: np.ndarray  # (T, N) projected-Hamiltonian trajectory
    n1: np.ndarray  # along the TEDVP branch, one entry per slice
    n2: np.ndarray  # along the MVP branch
    prenorm: np.ndarray  # ||P U P psi_t|| before renormalization, per step
    fixed_point_overlap: float  # |<v_max|psi_final>|^2 for the dominant eigenvector of PUP
    limiting_norm_loss: float  # 1 - |lambda_max|^2 of PUP on the subspace

    def observable(self, op: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        def ev(traj):
            return np.einsum("ti,ij,tj->t", traj.conj(), op, traj).real

        return ev(self.tedvp), ev(self.mvp)


def compare_tedvp_mclachlan(P: ProjectionSpace, H: np.ndarray, psi0, dt: float, n_times: int) -> Comparison:
    """Propagate ``psi0`` under a static ``H`` both ways inside the subspace ``P``.

    The TEDVP branch applies ``P exp(-iH dt) P`` and renormalizes every step;
    the MVP branch applies ``exp(-i P H P dt)``.
    """
    H = np.asarray(H, dtype=np.complex128)
    psi0 = np.asarray(psi0, dtype=np.complex128)
    if H.shape != (P.dim, P.dim) or psi0.shape != (P.dim,):
        raise DimensionError("Hamiltonian, state and projection dimensions differ")
    Q = P.basis
    U = matrix_exponential_unitary(H, dt)
    u_red = Q.conj().T @ U @ Q
    h_red = Q.conj().T @ H @ Q
    u_mvp = matrix_exponential_unitary(h_red, dt)

    start = Q.conj().T @ psi0
    start /= np.linalg.norm(start)
    a = start.copy()
    b = start.copy()
    ted = np.empty((n_times, Q.shape[1]), dtype=np.complex128)
    mvp = np.empty_like(ted)
    prenorm = np.empty(n_times - 1)
    for t in range(n_times):
        ted[t] = a
        mvp[t] = b
        if t == n_times - 1:
            break
        a = u_red @ a
        prenorm[t] = np.linalg.norm(a)
        a = a / prenorm[t]
        b = u_mvp @ b
    ted_full = ted @ Q.T
    mvp_full = mvp @ Q.T
    n1 = np.array([norm_loss_instant(P, U, x) for x in ted_full])
    n2 = np.array([norm_loss_perturbative(P, H, x, dt) for x in mvp_full])

    w, v = np.linalg.eig(u_red)
    j = int(np.argmax(np.abs(w)))
    vmax = v[:, j] / np.linalg.norm(v[:, j])
    overlap = float(abs(np.vdot(vmax, ted[-1])) ** 2)
    return Comparison(ted_full, mvp_full, n1, n2, prenorm, overlap, float(1.0 - abs(w[j]) ** 2))
