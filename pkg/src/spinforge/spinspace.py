"""Hilbert-space kinematics for chains of spin-1/2 sites.

Product basis: an N-bit integer indexes each basis state, site ``j`` is bit
``j`` and a cleared bit means spin up (m_j = +1/2).  Index 0 is the fully
polarized all-up state.  An attached probe qubit occupies bit ``N``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from math import comb, isfinite

import numpy as np

from .errors import CapacityError

MAX_SITES = 14


class SpinAxis(str, Enum):
    X = "x"
    Y = "y"
    Z = "z"

    @classmethod
    def parse(cls, value: "SpinAxis | str") -> "SpinAxis":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown spin axis {value!r}") from None


def check_capacity(n_qubits: int, limit: int = MAX_SITES) -> None:
    if n_qubits < 1:
        raise ValueError(f"need at least one site, got {n_qubits}")
    if n_qubits > limit:
        raise CapacityError(f"{n_qubits} qubits exceeds the dense-vector cap of {limit}")


@lru_cache(maxsize=None)
def popcounts(n_qubits: int) -> np.ndarray:
    """Number of down spins for every basis index (read-only array)."""
    idx = np.arange(1 << n_qubits, dtype=np.int64)
    counts = np.zeros(1 << n_qubits, dtype=np.int64)
    for j in range(n_qubits):
        counts += (idx >> j) & 1
    counts.flags.writeable = False
    return counts


@lru_cache(maxsize=None)
def magnetization(n_sites: int) -> np.ndarray:
    """Eigenvalue of S_z for every chain basis index."""
    m = 0.5 * n_sites - popcounts(n_sites)
    m.flags.writeable = False
    return m


@dataclass(frozen=True, eq=False)
class StateVector:
    """Pure state of ``n_sites`` chain spins, optionally with a probe qubit."""

    n_sites: int
    amplitudes: np.ndarray
    has_probe: bool = False

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amplitudes, dtype=complex)
        expected = 1 << (self.n_sites + int(self.has_probe))
        if amps.shape != (expected,):
            raise ValueError(
                f"amplitude array has shape {amps.shape}, expected ({expected},)"
            )
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_qubits(self) -> int:
        return self.n_sites + int(self.has_probe)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def with_amplitudes(self, amps: np.ndarray) -> "StateVector":
        return StateVector(self.n_sites, amps, self.has_probe)

    def expectation(self, op) -> complex:
        return complex(np.vdot(self.amplitudes, op.apply(self.amplitudes)))


@dataclass(frozen=True)
class CollectiveFrame:
    """Ordered collective rotations; the first entry acts first."""

    rotations: tuple = ()

    def __post_init__(self):
        rots = tuple((SpinAxis.parse(a), float(t)) for a, t in self.rotations)
        if len(rots) > 4:
            raise ValueError("a frame holds at most four rotations")
        if not all(isfinite(t) for _, t in rots):
            raise ValueError("frame angles must be finite")
        object.__setattr__(self, "rotations", rots)

    def apply(self, state: StateVector) -> StateVector:
        for axis, angle in self.rotations:
            state = rotate(state, axis, angle)
        return state

    def describe(self) -> str:
        if not self.rotations:
            return "identity"
        return " then ".join(f"R{a.value}({t:.12g})" for a, t in self.rotations)


def basis_state(n_sites: int, index: int) -> StateVector:
    check_capacity(n_sites)
    amps = np.zeros(1 << n_sites, dtype=complex)
    amps[index] = 1.0
    return StateVector(n_sites, amps)


def all_up_state(n_sites: int) -> StateVector:
    return basis_state(n_sites, 0)


def coherent_x_state(n_sites: int) -> StateVector:
    """Product of +1/2 eigenstates of every S_x^(i)."""
    check_capacity(n_sites)
    dim = 1 << n_sites
    return StateVector(n_sites, np.full(dim, dim ** -0.5, dtype=complex))


def ghz_state(n_sites: int, phase: float = 0.0) -> StateVector:
    """(|up...up> + e^{i phase}|down...down>)/sqrt(2) along z."""
    check_capacity(n_sites)
    amps = np.zeros(1 << n_sites, dtype=complex)
    amps[0] = 2 ** -0.5
    amps[-1] = np.exp(1j * phase) * 2 ** -0.5
    return StateVector(n_sites, amps)


def random_state(n_sites: int, rng: np.random.Generator) -> StateVector:
    check_capacity(n_sites)
    amps = rng.normal(size=1 << n_sites) + 1j * rng.normal(size=1 << n_sites)
    return StateVector(n_sites, amps / np.linalg.norm(amps))


def random_symmetric_state(n_sites: int, rng: np.random.Generator) -> StateVector:
    """Random superposition of the N+1 Dicke states."""
    coeffs = rng.normal(size=n_sites + 1) + 1j * rng.normal(size=n_sites + 1)
    coeffs /= np.linalg.norm(coeffs)
    return from_dicke(n_sites, coeffs)


def dicke_state(n_sites: int, n_down: int) -> StateVector:
    check_capacity(n_sites)
    mask = popcounts(n_sites) == n_down
    amps = np.where(mask, comb(n_sites, n_down) ** -0.5, 0.0).astype(complex)
    return StateVector(n_sites, amps)


def from_dicke(n_sites: int, coeffs) -> StateVector:
    """Build a symmetric state from Dicke coefficients ordered by number of down spins."""
    check_capacity(n_sites)
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.shape != (n_sites + 1,):
        raise ValueError(f"need {n_sites + 1} Dicke coefficients")
    k = popcounts(n_sites)
    norms = np.array([comb(n_sites, j) ** -0.5 for j in range(n_sites + 1)])
    return StateVector(n_sites, (coeffs * norms)[k])


def dicke_sums(amps: np.ndarray, n_sites: int) -> np.ndarray:
    """Sum of amplitudes in each popcount class.

    ``amps`` may be a single vector or a (dim, batch) array; the result has
    shape (N+1,) or (N+1, batch).  Dividing by sqrt(C(N, k)) gives the
    overlap with the normalized Dicke state with k down spins.
    """
    k = popcounts(n_sites)
    if amps.ndim == 1:
        re = np.bincount(k, weights=amps.real, minlength=n_sites + 1)
        im = np.bincount(k, weights=amps.imag, minlength=n_sites + 1)
        return re + 1j * im
    return np.stack([amps[k == j].sum(axis=0) for j in range(n_sites + 1)])


# --- collective operators -------------------------------------------------


def apply_collective(axis: SpinAxis | str, amps: np.ndarray, n_sites: int) -> np.ndarray:
    """Matrix-free S_axis = sum_j S_j^axis on the first ``n_sites`` bits.

    Extra high bits (a probe) are left untouched.  Works on a vector or a
    (dim, batch) block.
    """
    axis = SpinAxis.parse(axis)
    dim = amps.shape[0]
    n_qubits = dim.bit_length() - 1
    if axis is SpinAxis.Z:
        m = 0.5 * n_sites - _chain_popcount(n_qubits, n_sites)
        return m.reshape((-1,) + (1,) * (amps.ndim - 1)) * amps
    out = np.zeros_like(amps, dtype=complex)
    idx = np.arange(dim, dtype=np.int64)
    for j in range(n_sites):
        partner = idx ^ (1 << j)
        if axis is SpinAxis.X:
            out += 0.5 * amps[partner]
        else:
            # sigma_y|b> = i(-1)^b |1-b>; on the result index c the source bit is 1-c_j
            sign = 1 - 2 * ((idx >> j) & 1)
            coef = -0.5j * sign
            out += coef.reshape((-1,) + (1,) * (amps.ndim - 1)) * amps[partner]
    return out


@lru_cache(maxsize=None)
def _chain_popcount(n_qubits: int, n_sites: int) -> np.ndarray:
    idx = np.arange(1 << n_qubits, dtype=np.int64)
    counts = np.zeros(1 << n_qubits, dtype=np.int64)
    for j in range(n_sites):
        counts += (idx >> j) & 1
    counts.flags.writeable = False
    return counts


def collective_operator(axis: SpinAxis | str, n_sites: int):
    """S_axis = sum_i S_i^axis as a HamiltonianOp."""
    from .models import HamiltonianOp

    axis = SpinAxis.parse(axis)
    check_capacity(n_sites)
    terms = tuple((1.0, ((j, axis.value),)) for j in range(n_sites))
    return HamiltonianOp(n_sites, terms)


# --- rotations ------------------------------------------------------------

def single_site_rotation(axis: SpinAxis | str, angle: float) -> np.ndarray:
    """exp(-i angle S^axis) for one spin in the (up, down) basis."""
    axis = SpinAxis.parse(axis)
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    if axis is SpinAxis.X:
        return np.array([[c, -1j * s], [-1j * s, c]])
    if axis is SpinAxis.Y:
        return np.array([[c, -s], [s, c]], dtype=complex)
    return np.array([[np.exp(-0.5j * angle), 0], [0, np.exp(0.5j * angle)]])


def apply_local_unitaries(amps: np.ndarray, n_sites: int, gate: np.ndarray) -> np.ndarray:
    """Apply the same 2x2 gate to each of the first ``n_sites`` qubits."""
    dim = amps.shape[0]
    n_qubits = dim.bit_length() - 1
    batch = amps.shape[1:]
    psi = amps.reshape((2,) * n_qubits + batch)
    for j in range(n_sites):
        # bit j is tensor axis n_qubits-1-j in C order
        ax = n_qubits - 1 - j
        psi = np.moveaxis(np.tensordot(gate, psi, axes=([1], [ax])), 0, ax)
    return psi.reshape(amps.shape)


def rotate(state: StateVector, axis: SpinAxis | str, angle: float) -> StateVector:
    """exp(-i angle S_axis) applied to the chain part of ``state``."""
    if not isfinite(angle):
        raise ValueError(f"rotation angle must be finite, got {angle}")
    gate = single_site_rotation(axis, angle)
    return state.with_amplitudes(apply_local_unitaries(state.amplitudes, state.n_sites, gate))


# --- Wigner d -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WignerDTable:
    """d^J_{m'm}(beta); rows and columns ordered m = J, J-1, ..., -J."""

    J: float
    beta: float
    entries: np.ndarray = field(repr=False)

    def index(self, m: float) -> int:
        i = self.J - m
        if abs(i - round(i)) > 1e-9 or not 0 <= round(i) <= round(2 * self.J):
            raise ValueError(f"m={m} is not a valid projection for J={self.J}")
        return int(round(i))

    def element(self, m_prime: float, m: float) -> float:
        return float(self.entries[self.index(m_prime), self.index(m)])


def spin_matrices(J: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """J_x, J_y, J_z in the |J,m> basis ordered m = J..-J (Condon-Shortley)."""
    two_j = int(round(2 * J))
    m = J - np.arange(two_j + 1)
    # <m+1|J_+|m> = sqrt(J(J+1) - m(m+1)); row of m+1 sits one above row of m
    jp = np.zeros((two_j + 1, two_j + 1))
    for i in range(1, two_j + 1):
        mm = m[i]
        jp[i - 1, i] = np.sqrt(J * (J + 1) - mm * (mm + 1))
    jx = 0.5 * (jp + jp.T)
    jy = -0.5j * (jp - jp.T)
    jz = np.diag(m)
    return jx, jy, jz


def wigner_d(J: float, beta: float) -> WignerDTable:
    """Small Wigner d-matrix from the eigendecomposition of J_y."""
    two_j = 2 * J
    if abs(two_j - round(two_j)) > 1e-12 or two_j < 0:
        raise ValueError(f"J must be a nonnegative half-integer, got {J}")
    J = round(two_j) / 2
    _, jy, _ = spin_matrices(J)
    w, v = np.linalg.eigh(jy)
    d = (v * np.exp(-1j * beta * w)) @ v.conj().T
    return WignerDTable(J, float(beta), np.ascontiguousarray(d.real))


# --- symmetric sector -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class SymmetricProjector:
    """Orthonormal basis of the S = N/2 sector, one Dicke vector per row."""

    n_sites: int
    basis_vectors: np.ndarray = field(repr=False)

    @property
    def rank(self) -> int:
        return self.basis_vectors.shape[0]

    def overlaps(self, amps: np.ndarray) -> np.ndarray:
        return self.basis_vectors.conj() @ amps

    def apply(self, amps: np.ndarray) -> np.ndarray:
        return self.basis_vectors.T @ self.overlaps(amps)

    def dense(self) -> np.ndarray:
        return self.basis_vectors.T @ self.basis_vectors.conj()


def symmetric_projector(n_sites: int) -> SymmetricProjector:
    """Projector onto the eigenvalue (N/2)(N/2+1) of total spin squared.

    In every magnetization sector the S = N/2 eigenvector is the uniform
    superposition, so the basis is the set of normalized Dicke states.
    """
    check_capacity(n_sites)
    k = popcounts(n_sites)
    basis = np.zeros((n_sites + 1, 1 << n_sites))
    for j in range(n_sites + 1):
        basis[j, k == j] = comb(n_sites, j) ** -0.5
    basis.flags.writeable = False
    return SymmetricProjector(n_sites, basis)


def magnetization_distribution(state: StateVector) -> tuple[np.ndarray, np.ndarray]:
    """(m, p_m) with m running from -N/2 to N/2 in unit steps."""
    if state.has_probe:
        raise ValueError("magnetization_distribution expects a bare chain state")
    n = state.n_sites
    probs = np.bincount(popcounts(n), weights=np.abs(state.amplitudes) ** 2, minlength=n + 1)
    m = 0.5 * n - np.arange(n + 1)
    return m[::-1].copy(), probs[::-1].copy()
