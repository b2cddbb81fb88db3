"""Three-spin vanadium model, mean-field reference paths and CI in trajectory space.

Local spin basis: index 0 is the reference (spin-down) state ``|0>``, index 1
the excited state ``|1> = S^+ |0>``.  Pauli matrices are used without factors
of one half.  Site 1 is the most significant factor of the tensor product.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .clock import ClockEigenProblem, assemble_clock, extract_state
from .linalg import HermitianOperator, HistoryState, hermitian_eig_lowest, matrix_exponential_unitary
from .propagators import etrs_provider, serial_propagate

N_SPINS = 3

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, 1j], [-1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=np.complex128)
RAISE = np.array([[0, 0], [1, 0]], dtype=np.complex128)

LEVELS = {"MF": 0, "CIS": 1, "CISD": 2, "FCI": N_SPINS}


def site_operator(op: np.ndarray, site: int, n_spins: int = N_SPINS) -> np.ndarray:
    """``op`` acting on ``site`` (0-based) of an ``n_spins`` register."""
    factors = [op if i == site else np.eye(2) for i in range(n_spins)]
    return reduce(np.kron, factors)


def _dot(i: int, j: int) -> np.ndarray:
    return sum(site_operator(s, i) @ site_operator(s, j) for s in (SIGMA_X, SIGMA_Y, SIGMA_Z))


SZ_TOTAL = sum(site_operator(SIGMA_Z, i) for i in range(N_SPINS))
SX_TOTAL = sum(site_operator(SIGMA_X, i) for i in range(N_SPINS))
EXCHANGE_A = _dot(0, 1) + _dot(0, 2)
EXCHANGE_C = _dot(1, 2)


@dataclass(frozen=True)
class SpinModelParams:
    g: float = 1.95
    J_a: float = 64.6
    J_c: float = 6.9
    B0: float = 200.0
    B1_amp: float = 200.0
    m_pulse: float = 1.0
    mu_b_over_kB: float = 0.6717
    rescale: bool = True

    def __post_init__(self):
        if self.g <= 0 or self.B0 <= 0:
            raise ValueError("g and B0 must be positive")

    @property
    def mu(self) -> float:
        """g * mu_B in kelvin per tesla."""
        return self.g * self.mu_b_over_kB

    @property
    def energy_unit(self) -> float:
        return self.mu * self.B0 if self.rescale else 1.0

    def pulse(self, t: float) -> float:
        return self.B1_amp * np.exp(-0.5 * t * t) * np.cos(self.m_pulse * t)

    def with_couplings(self, J_a: float, J_c: float) -> "SpinModelParams":
        return SpinModelParams(self.g, J_a, J_c, self.B0, self.B1_amp, self.m_pulse, self.mu_b_over_kB, self.rescale)


def vanadium_hamiltonian(p: SpinModelParams, t: float) -> np.ndarray:
    H = (
        p.J_a * EXCHANGE_A
        + p.J_c * EXCHANGE_C
        + p.mu * p.B0 * SZ_TOTAL
        + p.mu * p.pulse(t) * SX_TOTAL
    )
    return H / p.energy_unit


def random_product_state(rng: np.random.Generator, n_spins: int = N_SPINS) -> np.ndarray:
    """Per-spin Haar-random factors, shape ``(n_spins, 2)``."""
    z = rng.standard_normal((n_spins, 2)) + 1j * rng.standard_normal((n_spins, 2))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def product_state(factors) -> np.ndarray:
    return reduce(np.kron, [np.asarray(f, dtype=np.complex128) for f in factors])


def factor_product_state(psi, n_spins: int = N_SPINS, tol: float = 1e-10) -> np.ndarray:
    """Split a product state into normalized single-spin factors.

    Raises ``ValueError`` when ``psi`` is entangled.
    """
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.ndim == 2:
        if psi.shape != (n_spins, 2):
            raise ValueError(f"expected {n_spins} two-component factors")
        return psi / np.linalg.norm(psi, axis=1, keepdims=True)
    if psi.size != 2**n_spins:
        raise ValueError("state has the wrong dimension")
    psi = psi / np.linalg.norm(psi)
    factors = []
    rest = psi
    for _ in range(n_spins - 1):
        m = rest.reshape(2, -1)
        u, s, vh = np.linalg.svd(m)
        if s[1] > tol * s[0]:
            raise ValueError("initial state is not a product state")
        factors.append(u[:, 0])
        rest = s[0] * vh[0]
    factors.append(rest / np.linalg.norm(rest))
    out = np.array(factors)
    if abs(abs(np.vdot(product_state(out), psi)) - 1.0) > tol:
        raise ValueError("initial state is not a product state")
    return out


def local_frame(phi: np.ndarray) -> np.ndarray:
    """Unitary whose first column is ``phi``."""
    perp = np.array([-np.conj(phi[1]), np.conj(phi[0])])
    return np.column_stack([phi, perp])


def mean_field_operators(H: np.ndarray, factors: np.ndarray) -> tuple[np.ndarray, float]:
    """Single-spin Hamiltonians contracted over the other spins, and <Phi|H|Phi>."""
    f = factors.shape[0]
    Ht = H.reshape((2,) * (2 * f))
    letters = "abcdefghijklmnopqrstuvwxyz"
    bra, ket = letters[:f], letters[f : 2 * f]
    hs = []
    for i in range(f):
        operands = [Ht]
        subs = [bra + ket]
        for j in range(f):
            if j != i:
                operands += [np.conj(factors[j]), factors[j]]
                subs += [bra[j], ket[j]]
        hs.append(np.einsum(",".join(subs) + "->" + bra[i] + ket[i], *operands))
    psi = product_state(factors)
    E = float(np.vdot(psi, H @ psi).real)
    return np.array(hs), E


@dataclass(frozen=True)
class MeanFieldPath:
    unitaries: np.ndarray  # (T, f, 2, 2)
    amplitude: complex
    times: np.ndarray

    @property
    def n_times(self) -> int:
        return self.unitaries.shape[0]

    @property
    def n_spins(self) -> int:
        return self.unitaries.shape[1]

    @property
    def factors(self) -> np.ndarray:
        """Rotated reference spins ``U_t^i |0>``, shape ``(T, f, 2)``."""
        return self.unitaries[:, :, :, 0]

    @property
    def states(self) -> np.ndarray:
        return np.stack([self.amplitude * product_state(fs) for fs in self.factors])


def mean_field_propagate(
    p: SpinModelParams, psi0, dt: float, n_times: int, t0: float = 0.0, sc_iterations: int = 3
) -> MeanFieldPath:
    """Time-dependent Hartree path for a product initial state.

    Each spin evolves under ``h_i - ((f-1)/f) E(t)`` with an ETRS step whose
    end-point generator is obtained self-consistently (``sc_iterations``).
    """
    factors = factor_product_state(psi0)
    f = factors.shape[0]
    shift = (f - 1) / f

    def generators(t, fs):
        hs, E = mean_field_operators(vanadium_hamiltonian(p, t), fs)
        return hs - shift * E * np.eye(2)

    U = np.empty((n_times, f, 2, 2), dtype=np.complex128)
    U[0] = [local_frame(phi) for phi in factors]
    times = t0 + dt * np.arange(n_times)
    for j in range(n_times - 1):
        fs = U[j, :, :, 0]
        g0 = generators(times[j], fs)
        half0 = [matrix_exponential_unitary(g0[i], 0.5 * dt) for i in range(f)]
        g1 = g0
        for _ in range(sc_iterations):
            steps = [matrix_exponential_unitary(g1[i], 0.5 * dt) @ half0[i] for i in range(f)]
            g1 = generators(times[j + 1], np.array([steps[i] @ fs[i] for i in range(f)]))
        U[j + 1] = [matrix_exponential_unitary(g1[i], 0.5 * dt) @ half0[i] @ U[j, i] for i in range(f)]
    return MeanFieldPath(U, 1.0 + 0j, times)


def excitation_patterns(n_spins: int, level: int) -> list[tuple[int, ...]]:
    """Occupation tuples with at most ``level`` excited spins, by class then lexicographic."""
    out = []
    for k in range(min(level, n_spins) + 1):
        for sites in itertools.combinations(range(n_spins), k):
            out.append(tuple(1 if i in sites else 0 for i in range(n_spins)))
    return out


@dataclass(frozen=True)
class TrajectoryBasis:
    """Orthonormal system-time basis, block diagonal in time.

    ``local[t, j]`` is the physical vector of basis state ``j`` at time ``t``;
    the system-time column index is ``t*M + j``.
    """

    level: str
    local: np.ndarray  # (T, M, N)
    patterns: tuple[tuple[int, ...], ...]

    @property
    def n_times(self) -> int:
        return self.local.shape[0]

    @property
    def per_time(self) -> int:
        return self.local.shape[1]

    @property
    def dim(self) -> int:
        return self.local.shape[2]

    @property
    def classes(self) -> np.ndarray:
        return np.array([sum(pat) for pat in self.patterns])

    def index(self, t: int, pattern: tuple[int, ...]) -> int:
        return t * self.per_time + self.patterns.index(tuple(pattern))

    def matrix(self) -> np.ndarray:
        """Dense ``(N*T, M*T)`` matrix whose columns are the basis vectors."""
        T, M, N = self.local.shape
        B = np.zeros((T, N, T, M), dtype=np.complex128)
        for t in range(T):
            B[t, :, t, :] = self.local[t].T
        return B.reshape(T * N, T * M)


def build_trajectory_basis(path: MeanFieldPath, level: str) -> TrajectoryBasis:
    if level not in LEVELS:
        raise ValueError(f"unknown CI level {level!r}; expected one of {sorted(LEVELS)}")
    pats = excitation_patterns(path.n_spins, LEVELS[level])
    T = path.n_times
    local = np.empty((T, len(pats), 2**path.n_spins), dtype=np.complex128)
    for t in range(T):
        for j, pat in enumerate(pats):
            local[t, j] = product_state([path.unitaries[t, i][:, n] for i, n in enumerate(pat)])
    return TrajectoryBasis(level, local, tuple(pats))


def project_clock(clock, basis: TrajectoryBasis) -> HermitianOperator:
    """B^dagger H B in basis coordinates."""
    H = clock.to_dense() if isinstance(clock, HermitianOperator) else np.asarray(clock)
    B = basis.matrix()
    return HermitianOperator(B.conj().T @ H @ B)


@dataclass(frozen=True)
class CIResult:
    level: str
    energy: float
    trajectory: np.ndarray  # (T, N), each slice normalized
    weights: np.ndarray  # squared weight per excitation class
    slice_norms: np.ndarray  # sqrt(T)*||<t|Phi>|| before renormalization
    times: np.ndarray


def ci_trajectory(
    p: SpinModelParams, psi0, dt: float, n_times: int, level: str, t0: float = 0.0
) -> CIResult:
    """Ground state of the penalty-pinned clock projected onto a CI trajectory basis."""
    factors = factor_product_state(psi0)
    psi0 = product_state(factors)
    path = mean_field_propagate(p, factors, dt, n_times, t0)
    basis = build_trajectory_basis(path, level)
    provider = etrs_provider(lambda t: vanadium_hamiltonian(p, t), t0, dt, n_times)
    clock = assemble_clock(ClockEigenProblem(provider, penalty_state=psi0))
    energy, c = hermitian_eig_lowest(project_clock(clock, basis), 1)[0]
    phi = HistoryState(basis.matrix() @ c, n_times, basis.dim)
    raw = np.stack([extract_state(phi, t) for t in range(n_times)])
    norms = np.linalg.norm(raw, axis=1)
    traj = raw / np.where(norms > 0, norms, 1.0)[:, None]
    overlap = np.vdot(traj[0], psi0)
    if abs(overlap) > 0:
        traj = traj * (overlap / abs(overlap))
    classes = basis.classes
    w2 = np.abs(c) ** 2
    cls = np.tile(classes, n_times)
    weights = np.array([w2[cls == k].sum() for k in range(classes.max() + 1)])
    return CIResult(level, energy, traj, weights, norms, path.times)


def exact_trajectory(p: SpinModelParams, psi0, dt: float, n_times: int, t0: float = 0.0) -> np.ndarray:
    """Serial ETRS propagation of the full Hamiltonian."""
    provider = etrs_provider(lambda t: vanadium_hamiltonian(p, t), t0, dt, n_times)
    psi0 = product_state(factor_product_state(psi0)) if np.ndim(psi0) == 2 else np.asarray(psi0, dtype=np.complex128)
    return serial_propagate(provider, psi0 / np.linalg.norm(psi0))


def expectation(op: np.ndarray, trajectory: np.ndarray) -> np.ndarray:
    """<psi_t|op|psi_t> / <psi_t|psi_t> for each row."""
    num = np.einsum("ti,ij,tj->t", trajectory.conj(), op, trajectory).real
    return num / np.einsum("ti,ti->t", trajectory.conj(), trajectory).real
