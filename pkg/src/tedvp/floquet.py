"""Fourier-in-time construction of G = F^dagger F with F = H(t) - i d/dt.

Basis states are ``|Phi_j> exp(2 pi i n t / T)`` for ``n = -(M-1)/2 .. (M-1)/2``,
ordered mode-major (flat index ``mode*N + j``).  Matrix elements of H(t) are
periodic trapezoid sums; the sample count starts at 64 per period and doubles
until no element moves by more than ``1e-10``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .linalg import HermitianOperator

MIN_SAMPLES = 64
QUADRATURE_TOL = 1e-10
MAX_SAMPLES = 1 << 16


@dataclass(frozen=True)
class FloquetGProblem:
    hamiltonian: Callable[[float], np.ndarray]
    period: float
    n_fourier: int
    dim: int

    def __post_init__(self):
        if self.n_fourier < 1 or self.n_fourier % 2 == 0:
            raise ValueError("n_fourier must be a positive odd number")
        if self.period <= 0:
            raise ValueError("period must be positive")

    @property
    def modes(self) -> np.ndarray:
        half = (self.n_fourier - 1) // 2
        return np.arange(-half, half + 1)


def _fourier_coefficients(p: FloquetGProblem, n_samples: int) -> dict[int, np.ndarray]:
    ts = p.period * np.arange(n_samples) / n_samples
    Hs = np.stack([np.asarray(p.hamiltonian(t), dtype=np.complex128) for t in ts])
    out = {}
    for m in range(-(p.n_fourier - 1), p.n_fourier):
        w = np.exp(-2j * np.pi * m * np.arange(n_samples) / n_samples)
        out[m] = np.tensordot(w, Hs, axes=1) / n_samples
    return out


def floquet_f_matrix(p: FloquetGProblem) -> np.ndarray:
    """Dense F in the truncated Fourier basis."""
    n_samples = MIN_SAMPLES
    coeffs = _fourier_coefficients(p, n_samples)
    while n_samples < MAX_SAMPLES:
        finer = _fourier_coefficients(p, 2 * n_samples)
        change = max(np.abs(finer[m] - coeffs[m]).max() for m in coeffs)
        coeffs, n_samples = finer, 2 * n_samples
        if change < QUADRATURE_TOL:
            break
    N, modes = p.dim, p.modes
    F = np.zeros((len(modes), N, len(modes), N), dtype=np.complex128)
    for a, n_out in enumerate(modes):
        for b, n_in in enumerate(modes):
            F[a, :, b, :] = coeffs[n_out - n_in]
        F[a, :, a, :] += (2 * np.pi * n_out / p.period) * np.eye(N)
    return F.reshape(len(modes) * N, len(modes) * N)


def build_floquet_g(p: FloquetGProblem) -> HermitianOperator:
    F = floquet_f_matrix(p)
    return HermitianOperator(F.conj().T @ F)
