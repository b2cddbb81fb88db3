"""Concrete per-slice propagators U_t.

A provider for ``T`` time slices supplies the ``T - 1`` link operators
``U_0 ... U_{T-2}``.  Batched methods act on a ``(m, N)`` array whose rows are
states and whose link indices are given by ``ts``; they are safe to call from
several threads at once.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .linalg import DimensionError, matrix_exponential_unitary

BOHR_PER_ANGSTROM = 1.8897259886


class PropagatorProvider:
    """Base class: subclasses implement the batched applies."""

    n_times: int
    dim: int

    @property
    def n_links(self) -> int:
        return self.n_times - 1

    def _check(self, ts, X):
        X = np.asarray(X, dtype=np.complex128)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise DimensionError(f"expected rows of length {self.dim}, got {X.shape}")
        ts = np.asarray(ts, dtype=int).reshape(-1)
        if ts.size != X.shape[0]:
            raise DimensionError("one link index per row is required")
        if ts.size and (ts.min() < 0 or ts.max() >= self.n_links):
            raise IndexError(f"link index out of range [0, {self.n_links})")
        return ts, X

    def apply_batch(self, ts, X) -> np.ndarray:
        raise NotImplementedError

    def apply_adjoint_batch(self, ts, X) -> np.ndarray:
        raise NotImplementedError

    def apply(self, t: int, x) -> np.ndarray:
        return self.apply_batch([t], np.asarray(x)[None, :])[0]

    def apply_adjoint(self, t: int, x) -> np.ndarray:
        return self.apply_adjoint_batch([t], np.asarray(x)[None, :])[0]


class DenseProvider(PropagatorProvider):
    """Provider backed by an explicit stack of unitaries, shape ``(T-1, N, N)``."""

    def __init__(self, unitaries):
        U = np.asarray(unitaries, dtype=np.complex128)
        if U.ndim != 3 or U.shape[1] != U.shape[2]:
            raise DimensionError(f"unitaries must have shape (T-1, N, N), got {U.shape}")
        U.flags.writeable = False
        self.unitaries = U
        self.n_times = U.shape[0] + 1
        self.dim = U.shape[1]

    def apply_batch(self, ts, X):
        ts, X = self._check(ts, X)
        return np.einsum("tij,tj->ti", self.unitaries[ts], X)

    def apply_adjoint_batch(self, ts, X):
        ts, X = self._check(ts, X)
        return np.einsum("tji,tj->ti", self.unitaries[ts].conj(), X)

    def matrix(self, t: int) -> np.ndarray:
        return self.unitaries[t]


def identity_provider(n_times: int, dim: int) -> DenseProvider:
    return DenseProvider(np.broadcast_to(np.eye(dim, dtype=np.complex128), (n_times - 1, dim, dim)))


def random_unitaries(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """Haar-random unitaries via QR with phase fix."""
    z = (rng.standard_normal((count, dim, dim)) + 1j * rng.standard_normal((count, dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=1, axis2=2)
    return q * (d / np.abs(d))[:, None, :]


class CountingProvider(PropagatorProvider):
    """Wraps a provider and counts single-state applications (thread-safe)."""

    def __init__(self, inner: PropagatorProvider):
        self.inner = inner
        self.n_times = inner.n_times
        self.dim = inner.dim
        self.forward_count = 0
        self.adjoint_count = 0
        self._lock = threading.Lock()

    def apply_batch(self, ts, X):
        out = self.inner.apply_batch(ts, X)
        with self._lock:
            self.forward_count += out.shape[0]
        return out

    def apply_adjoint_batch(self, ts, X):
        out = self.inner.apply_adjoint_batch(ts, X)
        with self._lock:
            self.adjoint_count += out.shape[0]
        return out

    def reset(self):
        with self._lock:
            self.forward_count = 0
            self.adjoint_count = 0


# ---------------------------------------------------------------------------
# Exponential and ETRS propagators


def etrs_step(H_t, H_tdt, dt: float) -> np.ndarray:
    """exp(-i dt/2 H(t+dt)) exp(-i dt/2 H(t))."""
    return matrix_exponential_unitary(H_tdt, 0.5 * dt) @ matrix_exponential_unitary(H_t, 0.5 * dt)


def etrs_provider(hamiltonian: Callable[[float], np.ndarray], t0: float, dt: float, n_times: int) -> DenseProvider:
    """ETRS links between the grid times ``t0 + j*dt``, ``j = 0..n_times-1``."""
    Hs = [np.asarray(hamiltonian(t0 + j * dt)) for j in range(n_times)]
    return DenseProvider([etrs_step(Hs[j], Hs[j + 1], dt) for j in range(n_times - 1)])


def serial_propagate(provider: PropagatorProvider, psi0) -> np.ndarray:
    """Trajectory ``(T, N)`` obtained by applying the links in order."""
    out = np.empty((provider.n_times, provider.dim), dtype=np.complex128)
    out[0] = psi0
    for t in range(provider.n_links):
        out[t + 1] = provider.apply(t, out[t])
    return out


# ---------------------------------------------------------------------------
# Morse oscillator and split-operator Fourier propagation


@dataclass(frozen=True)
class MorseModel:
    """V(x) = D (exp(-2 beta x) - 2 exp(-beta x)) on a periodic grid.

    The grid is ``x_min + j*dx`` for ``j < n_grid`` with
    ``dx = (x_max - x_min)/n_grid``.
    """

    mass: float = 918.5
    beta: float = 0.9374
    depth: float = 0.164
    n_grid: int = 256
    x_min: float = -2.4
    x_max: float = 4.0
    x: np.ndarray = field(init=False, repr=False, compare=False)
    potential: np.ndarray = field(init=False, repr=False, compare=False)
    momenta: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.n_grid
        if n < 2 or n & (n - 1):
            raise ValueError(f"grid size must be a power of two, got {n}")
        if not (self.mass > 0 and self.beta > 0 and self.depth >= 0):
            raise ValueError("mass and beta must be positive, depth non-negative")
        if self.x_max <= self.x_min:
            raise ValueError("empty grid interval")
        x = self.x_min + self.dx * np.arange(n)
        v = self.depth * (np.exp(-2 * self.beta * x) - 2 * np.exp(-self.beta * x))
        p = 2 * np.pi * np.fft.fftfreq(n, d=self.dx)
        for name, arr in (("x", x), ("potential", v), ("momenta", p)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_grid

    @property
    def omega(self) -> float:
        """Harmonic frequency at the well bottom."""
        return self.beta * np.sqrt(2 * self.depth / self.mass)

    @property
    def kinetic(self) -> np.ndarray:
        return self.momenta**2 / (2 * self.mass)

    def apply_hamiltonian(self, psi: np.ndarray) -> np.ndarray:
        t_psi = np.fft.ifft(self.kinetic * np.fft.fft(psi, axis=-1), axis=-1)
        return t_psi + self.potential * psi

    def energy(self, psi: np.ndarray) -> float:
        return float(np.vdot(psi, self.apply_hamiltonian(psi)).real / np.vdot(psi, psi).real)

    def dense_hamiltonian(self) -> np.ndarray:
        """The grid Hamiltonian as an explicit matrix (Fourier kinetic term)."""
        n = self.n_grid
        f = np.fft.fft(np.eye(n), axis=0)
        finv = np.fft.ifft(np.eye(n), axis=0)
        return finv @ (self.kinetic[:, None] * f) + np.diag(self.potential)

    def position_mean(self, psi: np.ndarray) -> float:
        w = np.abs(psi) ** 2
        return float(np.sum(self.x * w) / np.sum(w))


def soft_propagate(model: MorseModel, dt: float, psi, n_steps: int = 1) -> np.ndarray:
    """``n_steps`` symmetric split-operator steps of length ``dt``.

    ``psi`` may be a single state or a stack of states along the leading axis.
    Adjacent half-step potential phases are merged.
    """
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.shape[-1] != model.n_grid:
        raise DimensionError(f"state length {psi.shape[-1]} != grid size {model.n_grid}")
    if n_steps < 1 or dt == 0.0:
        return psi.copy()
    half_v = np.exp(-0.5j * dt * model.potential)
    full_v = half_v * half_v
    kin = np.exp(-1j * dt * model.kinetic)
    out = half_v * psi
    for step in range(n_steps):
        out = np.fft.ifft(kin * np.fft.fft(out, axis=-1), axis=-1)
        out *= half_v if step == n_steps - 1 else full_v
    return out


def soft_step(model: MorseModel, dt: float, psi) -> np.ndarray:
    return soft_propagate(model, dt, psi, 1)


class SoftProvider(PropagatorProvider):
    """Time-independent provider where every link is ``n_steps`` SOFT steps of ``dt``."""

    def __init__(self, model: MorseModel, dt: float, n_steps: int, n_times: int):
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if n_times < 2:
            raise ValueError("need at least two time slices")
        self.model = model
        self.dt = float(dt)
        self.n_steps = int(n_steps)
        self.n_times = int(n_times)
        self.dim = model.n_grid

    def apply_batch(self, ts, X):
        _, X = self._check(ts, X)
        return soft_propagate(self.model, self.dt, X, self.n_steps)

    def apply_adjoint_batch(self, ts, X):
        _, X = self._check(ts, X)
        return soft_propagate(self.model, -self.dt, X, self.n_steps)


def make_fine_coarse(model: MorseModel, dt: float, k: int, n_times: int) -> tuple[SoftProvider, SoftProvider]:
    """Fine links: ``k`` SOFT steps of ``dt``; coarse links: one SOFT step of ``k*dt``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return SoftProvider(model, dt, k, n_times), SoftProvider(model, k * dt, 1, n_times)


def gaussian_packet(model: MorseModel, displacement: float) -> np.ndarray:
    """Harmonic ground-state Gaussian centred at ``displacement`` (bohr), unit vector norm."""
    if not (model.x[0] < displacement < model.x[-1]):
        raise ValueError("displacement lies outside the grid")
    mw = model.mass * model.omega
    psi = np.exp(-0.5 * mw * (model.x - displacement) ** 2).astype(np.complex128)
    psi /= np.linalg.norm(psi)
    edge = max(abs(psi[0]), abs(psi[-1]))
    if edge > 1e-10:
        raise ValueError(f"packet amplitude {edge:.2e} at the grid boundary; widen the grid")
    return psi
