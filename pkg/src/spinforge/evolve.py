"""Time evolution: exact propagation and the Trotterized staggered-XXX circuit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .models import HamiltonianOp, ModelSpec
from .spinspace import StateVector, popcounts

# below this the block structure of H in S_z sectors is treated as exact
_SECTOR_TOL = 1e-13


@dataclass(frozen=True, eq=False)
class Propagator:
    """Eigendecomposition of H, stored per conserved-magnetization block.

    ``blocks`` is a tuple of ``(indices, eigenvalues, eigenvectors)``; a
    single block covering every index means no symmetry was used.
    """

    n_qubits: int
    blocks: tuple = field(repr=False)

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.concatenate([w for _, w, _ in self.blocks])

    @property
    def eigenvectors(self) -> np.ndarray:
        cols = []
        for idx, _, v in self.blocks:
            full = np.zeros((self.dim, v.shape[1]), dtype=complex)
            full[idx] = v
            cols.append(full)
        return np.hstack(cols)

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T

    def evolve(self, amps: np.ndarray, times) -> np.ndarray:
        """Columns exp(-i H t) amps for every t, shape (dim, len(times))."""
        times = np.asarray(times, dtype=float)
        out = np.zeros((self.dim, times.size), dtype=complex)
        for idx, w, v in self.blocks:
            coeff = v.conj().T @ amps[idx]
            if not np.any(coeff):
                continue
            phases = np.exp(-1j * np.outer(w, times))
            out[idx] = v @ (coeff[:, None] * phases)
        return out


class _DiagonalPropagator(Propagator):
    def __init__(self, n_qubits: int, energies: np.ndarray):
        object.__setattr__(self, "n_qubits", n_qubits)
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "blocks", ())

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.energies

    @property
    def eigenvectors(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)

    def evolve(self, amps: np.ndarray, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        return amps[:, None] * np.exp(-1j * np.outer(self.energies, times))


def diagonalize(H: HamiltonianOp) -> Propagator:
    """Dense Hermitian eigendecomposition, split by S_z sectors when H conserves them."""
    if H.is_diagonal:
        # computational basis already diagonalizes H; one 1x1 block per state is
        # wasteful, so use a single block with identity eigenvectors
        w = np.real(H.diagonal())
        return _DiagonalPropagator(H.n_qubits, w)
    mat = H.dense()
    labels = popcounts(H.n_qubits)
    off = labels[:, None] != labels[None, :]
    sectors = float(np.max(np.abs(mat[off]), initial=0.0)) < _SECTOR_TOL
    groups = [np.flatnonzero(labels == k) for k in range(H.n_qubits + 1)] if sectors else [
        np.arange(H.dim)
    ]
    blocks = []
    try:
        for idx in groups:
            w, v = np.linalg.eigh(mat[np.ix_(idx, idx)])
            blocks.append((idx, w, v))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    return Propagator(H.n_qubits, tuple(blocks))


def _check_times(times) -> np.ndarray:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if not np.all(np.isfinite(times)):
        raise ValueError("evolution times must be finite")
    return times


def exact_evolve(H: HamiltonianOp, psi0: StateVector, times, propagator: Propagator | None = None):
    """exp(-i H t) psi0 for each t in ``times``."""
    if H.dim != psi0.dim:
        raise ValueError(f"dimension mismatch: H has {H.dim}, state has {psi0.dim}")
    times = _check_times(times)
    prop = propagator if propagator is not None else diagonalize(H)
    cols = prop.evolve(psi0.amplitudes, times)
    out = []
    for k, t in enumerate(times):
        # t = 0 returns the input untouched rather than V V^dag psi0
        out.append(psi0 if t == 0 else psi0.with_amplitudes(cols[:, k]))
    return out


def evolve_block(H: HamiltonianOp, psi0: StateVector, times, propagator: Propagator | None = None):
    """Like exact_evolve but returns the raw (dim, n_times) amplitude block."""
    if H.dim != psi0.dim:
        raise ValueError(f"dimension mismatch: H has {H.dim}, state has {psi0.dim}")
    times = _check_times(times)
    prop = propagator if propagator is not None else diagonalize(H)
    return prop.evolve(psi0.amplitudes, times)


# --- Trotter circuit ------------------------------------------------------


@dataclass(frozen=True)
class TrotterPlan:
    """Step U_V [U_e U_o]^2 U_V repeated ``n_steps`` times.

    ``layers`` lists the layers of one step in the order they act on the
    state (rightmost factor of the product first).  Each layer is
    ``("field", angles)`` with per-site z-rotation angles, or
    ``("bonds", ((i, j), ...), tau)`` with tau the bond evolution time.

    Successive steps swap the roles of the even and odd layers
    (``mirrored_layers``), so every pair of steps is palindromic.  A fixed
    e/o order would leave a first-order error from [H_e, H_o].
    """

    n_sites: int
    n_steps: int
    dt: float
    J0: float
    h_z: float
    even_bonds: tuple
    odd_bonds: tuple
    layers: tuple

    @property
    def two_site_gates_per_step(self) -> int:
        return 2 * (len(self.even_bonds) + len(self.odd_bonds))

    @property
    def field_layers_per_step(self) -> int:
        return sum(1 for layer in self.layers if layer[0] == "field")

    @property
    def mirrored_layers(self) -> tuple:
        return tuple(reversed(self.layers))

    def step_layers(self, k: int) -> tuple:
        return self.layers if k % 2 == 0 else self.mirrored_layers


def build_trotter_plan(spec: ModelSpec, t: float, n_steps: int) -> TrotterPlan:
    if spec.kind != "staggered_xxx":
        raise ValueError(f"the Trotter circuit is defined for staggered_xxx, not {spec.kind}")
    n = spec.n_sites
    if n % 2:
        raise ValueError("Trotter layering needs even N")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if not math.isfinite(t):
        raise ValueError("evolution time must be finite")
    dt = t / n_steps
    even = tuple((i, i + 1) for i in range(0, n, 2))
    odd = tuple((i, (i + 1) % n) for i in range(1, n, 2))
    # field: exp(-i (dt/2) V) with V = -h_z sum_i (-1)^i S_i^z
    angles = tuple(-spec.h_z * (-1) ** i * dt / 2 for i in range(n))
    half = dt / 2
    layers = (
        ("field", angles),
        ("bonds", odd, half),
        ("bonds", even, half),
        ("bonds", odd, half),
        ("bonds", even, half),
        ("field", angles),
    )
    return TrotterPlan(n, n_steps, dt, spec.J0, spec.h_z, even, odd, layers)


def _swap_permutation(n_qubits: int, i: int, j: int) -> np.ndarray:
    idx = np.arange(1 << n_qubits, dtype=np.int64)
    bi = (idx >> i) & 1
    bj = (idx >> j) & 1
    diff = bi ^ bj
    return idx ^ (diff << i) ^ (diff << j)


class _CompiledStep:
    """Cached kernels for applying one Trotter step to amplitude blocks."""

    def __init__(self, plan: TrotterPlan):
        n = plan.n_sites
        self.plan = plan
        self.swaps = {}
        for bond in plan.even_bonds + plan.odd_bonds:
            self.swaps[bond] = _swap_permutation(n, *bond)
        idx = np.arange(1 << n, dtype=np.int64)
        self.field_phase = None
        angles = next(layer[1] for layer in plan.layers if layer[0] == "field")
        if any(angles):
            # exp(-i phi S^z) gives exp(-i phi m_j) per site
            phase = np.zeros(1 << n)
            for j, phi in enumerate(angles):
                m_j = 0.5 - ((idx >> j) & 1)
                phase += phi * m_j
            self.field_phase = np.exp(-1j * phase)

    def bond_coeffs(self, tau: float) -> tuple[complex, complex]:
        # exp(-i tau (-J0) S_i.S_j) with S_i.S_j = SWAP/2 - 1/4
        a = 0.5 * self.plan.J0 * tau
        g = np.exp(-0.25j * self.plan.J0 * tau)
        return g * np.cos(a), 1j * g * np.sin(a)

    def apply(self, amps: np.ndarray, k: int = 0) -> np.ndarray:
        """Run step number ``k`` (its parity picks the layer order)."""
        extra = (1,) * (amps.ndim - 1)
        for layer in self.plan.step_layers(k):
            if layer[0] == "field":
                if self.field_phase is not None:
                    amps = self.field_phase.reshape((-1,) + extra) * amps
                continue
            _, bonds, tau = layer
            c, s = self.bond_coeffs(tau)
            for bond in bonds:
                amps = c * amps + s * amps[self.swaps[bond]]
        return amps


def trotter_evolve(spec: ModelSpec, psi0: StateVector, t: float, n_steps: int) -> StateVector:
    """Apply ``n_steps`` symmetric Trotter steps of length t / n_steps."""
    plan = build_trotter_plan(spec, t, n_steps)
    if psi0.has_probe or psi0.n_sites != spec.n_sites:
        raise ValueError("initial state does not match the model")
    step = _CompiledStep(plan)
    amps = np.array(psi0.amplitudes)
    for k in range(plan.n_steps):
        amps = step.apply(amps, k)
    return psi0.with_amplitudes(amps)


def trotter_step_matrix(spec: ModelSpec, dt: float, n_steps: int = 1) -> np.ndarray:
    """Unitary of the first ``n_steps`` steps, from running the circuit on every basis vector."""
    plan = build_trotter_plan(spec, dt * n_steps, n_steps)
    step = _CompiledStep(plan)
    amps = np.eye(1 << spec.n_sites, dtype=complex)
    for k in range(n_steps):
        amps = step.apply(amps, k)
    return amps


def default_trotter_steps(t: float, spec: ModelSpec, max_dt_energy: float = 0.05) -> int:
    """Smallest n with dt * max(J0, |h_z|) <= ``max_dt_energy``."""
    scale = max(spec.J0, abs(spec.h_z))
    return max(1, math.ceil(abs(t) * scale / max_dt_energy - 1e-12))


def trotter_series(spec: ModelSpec, psi0: StateVector, times, max_dt_energy: float = 0.05):
    """Trotter states on a uniform time grid starting at 0.

    Each grid interval is split into the same even number of steps so
    consecutive grid states are linked by a power of the two-step unitary.
    Returns (amplitude block of shape (dim, n_times), steps per interval, dt).
    """
    times = _check_times(times)
    if times[0] != 0:
        raise ValueError("time grid must start at 0")
    dim = psi0.dim
    out = np.zeros((dim, times.size), dtype=complex)
    out[:, 0] = psi0.amplitudes
    if times.size == 1:
        return out, 0, 0.0
    spacing = np.diff(times)
    if np.ptp(spacing) > 1e-9 * abs(spacing[0]):
        raise ValueError("trotter_series needs a uniform grid")
    interval = float(spacing[0])
    per_interval = default_trotter_steps(interval, spec, max_dt_energy)
    per_interval += per_interval % 2
    dt = interval / per_interval
    hop = np.linalg.matrix_power(trotter_step_matrix(spec, dt, 2), per_interval // 2)
    amps = np.array(psi0.amplitudes)
    for k in range(1, times.size):
        amps = hop @ amps
        out[:, k] = amps
    return out, per_interval, dt
