"""Complex vector/matrix kernel shared by every other module.

State vectors are plain 1-D ``complex128`` numpy arrays.  A history state is a
flat vector of length ``N*T`` laid out time-major, so slice ``t`` is the
contiguous block ``[t*N, (t+1)*N)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class DimensionError(ValueError):
    """Raised when operands have incompatible dimensions."""


class EigensolveError(RuntimeError):
    """Raised when an eigensolve does not meet its residual bound."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (best residual {residual:.3e})")
        self.residual = residual


def as_state(x, normalized: bool = False) -> np.ndarray:
    """Return ``x`` as a 1-D complex128 array, optionally checking its norm."""
    v = np.asarray(x, dtype=np.complex128).reshape(-1)
    if v.size < 1:
        raise DimensionError("state vector must have length >= 1")
    if normalized and abs(np.vdot(v, v).real - 1.0) > 1e-12:
        raise ValueError("state vector is not normalized")
    return v


def normalize(x: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(x)
    if nrm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return x / nrm


def inner(x, y) -> complex:
    """Conjugate-linear in ``x``: returns sum(conj(x_i) * y_i)."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise DimensionError(f"inner product of shapes {x.shape} and {y.shape}")
    return complex(np.vdot(x, y))


@dataclass(frozen=True)
class HistoryState:
    """System-time vector holding ``T`` slices of dimension ``N``."""

    data: np.ndarray
    n_times: int
    dim: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128).reshape(-1)
        if data.size != self.n_times * self.dim:
            raise DimensionError(
                f"flat length {data.size} != T*N = {self.n_times}*{self.dim}"
            )
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @classmethod
    def from_slices(cls, slices) -> "HistoryState":
        arr = np.asarray(slices, dtype=np.complex128)
        if arr.ndim != 2:
            raise DimensionError("slices must form a (T, N) array")
        return cls(arr.reshape(-1).copy(), arr.shape[0], arr.shape[1])

    @property
    def slices(self) -> np.ndarray:
        """Read-only ``(T, N)`` view."""
        return self.data.reshape(self.n_times, self.dim)

    def slice(self, t: int) -> np.ndarray:
        return self.slices[t]

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))


class HermitianOperator:
    """Hermitian operator given densely or as a matrix-free apply.

    Parameters
    ----------
    matrix : array, optional
        Dense ``D x D`` matrix.
    apply : callable, optional
        Function mapping a length-``D`` vector to a length-``D`` vector.
    dim : int, optional
        Required with ``apply``.
    """

    def __init__(self, matrix=None, apply: Callable | None = None, dim: int | None = None):
        if matrix is None and apply is None:
            raise ValueError("need a dense matrix or an apply function")
        if matrix is not None:
            m = np.asarray(matrix, dtype=np.complex128)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise DimensionError(f"operator matrix must be square, got {m.shape}")
            m.flags.writeable = False
            self._matrix = m
            self.dim = m.shape[0]
            self._apply = None
        else:
            if dim is None:
                raise ValueError("matrix-free operators need an explicit dim")
            self._matrix = None
            self._apply = apply
            self.dim = int(dim)

    @property
    def is_dense(self) -> bool:
        return self._matrix is not None

    def __matmul__(self, x):
        return self.apply(x)

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.complex128)
        if x.shape[0] != self.dim:
            raise DimensionError(f"operator of dim {self.dim} applied to length {x.shape[0]}")
        if self._matrix is not None:
            return self._matrix @ x
        return np.asarray(self._apply(x), dtype=np.complex128)

    def to_dense(self) -> np.ndarray:
        """Dense matrix; matrix-free operators are materialized column by column."""
        if self._matrix is not None:
            return self._matrix
        eye = np.eye(self.dim, dtype=np.complex128)
        return np.column_stack([self.apply(eye[:, j]) for j in range(self.dim)])

    def norm_estimate(self) -> float:
        return float(np.linalg.norm(self.to_dense(), 2))


def _dense(A) -> np.ndarray:
    if isinstance(A, HermitianOperator):
        return A.to_dense()
    m = np.asarray(A, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    return m


def hermitian_eig_lowest(A, k: int = 1) -> list[tuple[float, np.ndarray]]:
    """The ``k`` lowest eigenpairs of a Hermitian operator, ascending.

    Uses a dense factorization; matrix-free operators are materialized first.
    """
    m = _dense(A)
    d = m.shape[0]
    if k < 1 or k > d:
        raise DimensionError(f"requested {k} eigenpairs of a {d}-dimensional operator")
    herm = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(herm)
    scale = max(np.abs(w).max(), 1.0)
    out = []
    for j in range(k):
        vec = v[:, j]
        res = float(np.linalg.norm(m @ vec - w[j] * vec))
        if res > 1e-9 * scale:
            raise EigensolveError(f"eigenpair {j} failed the residual bound", res)
        out.append((float(w[j]), vec))
    return out


def hermitian_spectrum(A) -> np.ndarray:
    m = _dense(A)
    return np.linalg.eigvalsh(0.5 * (m + m.conj().T))


def matrix_exponential_unitary(H, dt: float) -> np.ndarray:
    """exp(-i H dt) for dense Hermitian ``H`` via eigendecomposition."""
    m = _dense(H)
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (v * np.exp(-1j * dt * w)) @ v.conj().T


def align_phase(x: np.ndarray) -> np.ndarray:
    """Rotate ``x`` so its largest-magnitude amplitude is real and positive."""
    x = np.asarray(x, dtype=np.complex128)
    j = int(np.argmax(np.abs(x)))
    if x[j] == 0:
        return x.copy()
    return x * (abs(x[j]) / x[j])


def fidelity(x: np.ndarray, y: np.ndarray) -> float:
    """|<x|y>|^2 / (<x|x><y|y>)."""
    nx = np.vdot(x, x).real
    ny = np.vdot(y, y).real
    return float(abs(np.vdot(x, y)) ** 2 / (nx * ny))
