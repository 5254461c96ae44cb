"""Microscopic and effective spin-chain Hamiltonians."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import cached_property
from math import isfinite

import numpy as np

from .errors import CapacityError
from .spinspace import MAX_SITES, SpinAxis, check_capacity

KINDS = ("staggered_xxx", "longrange_xxz", "oat", "ising_limit")
DISTANCES = ("ring_minimal", "linear")
# term-level operators (single-flip sector work) may exceed the dense cap
MAX_TERM_SITES = 64


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    n_sites: int
    J0: float = 1.0
    h_z: float = 0.0
    delta: float = 0.0
    gamma: float = 1.0
    kac: bool = True
    distance: str = "ring_minimal"
    chi: float | None = None  # only read by kind="oat"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.distance not in DISTANCES:
            raise ValueError(f"unknown distance convention {self.distance!r}")
        if not 1 <= self.n_sites <= MAX_TERM_SITES:
            raise CapacityError(f"n_sites={self.n_sites} outside 1..{MAX_TERM_SITES}")
        if self.kind == "staggered_xxx" and self.n_sites % 2:
            raise ValueError("n_sites must be even for the staggered XXX ring")
        if not self.J0 > 0:
            raise ValueError(f"J0 must be positive, got {self.J0}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        for name in ("J0", "h_z", "delta", "gamma"):
            if not isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.kind == "oat" and self.chi is None:
            raise ValueError("kind='oat' needs an explicit chi")

    def to_dict(self) -> dict:
        return asdict(self)


def _compile_term(coef: complex, ops) -> tuple[int, int, int, complex]:
    """Pauli-string data (flip mask, z/y mask, number of y) for a spin product."""
    flip = zy = 0
    ny = 0
    sites = set()
    for site, axis in ops:
        if site in sites:
            raise ValueError(f"site {site} repeated inside one term")
        sites.add(site)
        axis = SpinAxis.parse(axis)
        bit = 1 << site
        if axis is SpinAxis.X:
            flip |= bit
        elif axis is SpinAxis.Y:
            flip |= bit
            zy |= bit
            ny += 1
        else:
            zy |= bit
    # S = sigma/2 per factor
    return flip, zy, ny, coef * 0.5 ** len(ops)


@dataclass(frozen=True, eq=False)
class HamiltonianOp:
    """Hermitian operator written as a weighted sum of spin-operator products.

    ``terms`` holds ``(coefficient, ((site, axis), ...))`` pairs where each
    factor is a spin-1/2 operator S^axis = sigma^axis / 2; an empty product is
    the identity.  Sites ``0..n_sites-1`` are chain spins, site ``n_sites`` is
    the probe when ``has_probe`` is set.
    """

    n_sites: int
    terms: tuple = ()
    has_probe: bool = False
    label: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((c, tuple(ops)) for c, ops in self.terms))
        limit = self.n_qubits
        for _, ops in self.terms:
            for site, _ in ops:
                if not 0 <= site < limit:
                    raise ValueError(f"site {site} outside 0..{limit - 1}")

    @property
    def n_qubits(self) -> int:
        return self.n_sites + int(self.has_probe)

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    @cached_property
    def _pauli(self) -> tuple:
        return tuple(_compile_term(c, ops) for c, ops in self.terms)

    @cached_property
    def _blocks(self) -> dict[int, np.ndarray]:
        """flip mask -> coefficient vector D with (H psi)[c] = sum D[c] psi[c ^ flip]."""
        check_capacity(self.n_qubits, MAX_SITES + 1)
        idx = np.arange(self.dim, dtype=np.int64)
        blocks: dict[int, np.ndarray] = {}
        for flip, zy, ny, coef in self._pauli:
            src = idx ^ flip
            parity = np.zeros(self.dim, dtype=np.int64)
            masked = src & zy
            for j in range(self.n_qubits):
                if zy >> j & 1:
                    parity ^= (masked >> j) & 1
            vec = coef * (1j ** ny) * (1 - 2 * parity)
            if flip in blocks:
                blocks[flip] = blocks[flip] + vec
            else:
                blocks[flip] = vec.astype(complex)
        for vec in blocks.values():
            vec.flags.writeable = False
        return blocks

    @property
    def is_diagonal(self) -> bool:
        return all(flip == 0 for flip, *_ in self._pauli)

    def diagonal(self) -> np.ndarray:
        return self._blocks.get(0, np.zeros(self.dim, dtype=complex)).real.copy()

    def apply(self, amps: np.ndarray) -> np.ndarray:
        if amps.shape[0] != self.dim:
            raise ValueError(f"vector of length {amps.shape[0]} does not match dim {self.dim}")
        extra = (1,) * (amps.ndim - 1)
        out = np.zeros(amps.shape, dtype=complex)
        idx = np.arange(self.dim, dtype=np.int64)
        for flip, vec in self._blocks.items():
            src = amps if flip == 0 else amps[idx ^ flip]
            out += vec.reshape((-1,) + extra) * src
        return out

    @cached_property
    def _dense(self) -> np.ndarray:
        check_capacity(self.n_qubits, MAX_SITES + 1)
        mat = np.zeros((self.dim, self.dim), dtype=complex)
        idx = np.arange(self.dim, dtype=np.int64)
        for flip, vec in self._blocks.items():
            mat[idx, idx ^ flip] += vec
        mat.flags.writeable = False
        return mat

    def dense(self) -> np.ndarray:
        """Dense matrix, built once and cached."""
        return self._dense

    def basis_action(self, index: int) -> dict[int, complex]:
        """H|index> as {target index: amplitude}, without any 2^N arrays."""
        out: dict[int, complex] = {}
        for flip, zy, ny, coef in self._pauli:
            sign = -1 if (index & zy).bit_count() & 1 else 1
            target = index ^ flip
            out[target] = out.get(target, 0.0) + coef * (1j ** ny) * sign
        return out

    def sector_matrix(self, indices) -> np.ndarray:
        """Matrix of H restricted to the span of the given basis indices."""
        indices = [int(i) for i in indices]
        pos = {b: k for k, b in enumerate(indices)}
        mat = np.zeros((len(indices), len(indices)), dtype=complex)
        for col, b in enumerate(indices):
            for target, amp in self.basis_action(b).items():
                row = pos.get(target)
                if row is not None:
                    mat[row, col] += amp
                elif abs(amp) > 1e-14:
                    raise ValueError("operator leaves the requested sector")
        return mat

    def __add__(self, other: "HamiltonianOp") -> "HamiltonianOp":
        if (self.n_sites, self.has_probe) != (other.n_sites, other.has_probe):
            raise ValueError("operators act on different spaces")
        return HamiltonianOp(self.n_sites, self.terms + other.terms, self.has_probe)

    def scaled(self, factor: float) -> "HamiltonianOp":
        return HamiltonianOp(
            self.n_sites, tuple((factor * c, ops) for c, ops in self.terms), self.has_probe
        )


def heisenberg_terms(i: int, j: int, coef: float, zz_extra: float = 0.0) -> list:
    """coef * (S_i . S_j + zz_extra S_i^z S_j^z)."""
    return [
        (coef, ((i, "x"), (j, "x"))),
        (coef, ((i, "y"), (j, "y"))),
        (coef * (1.0 + zz_extra), ((i, "z"), (j, "z"))),
    ]


def ring_distance(i: int, j: int, n_sites: int, distance: str = "ring_minimal") -> int:
    r = abs(i - j)
    return min(r, n_sites - r) if distance == "ring_minimal" else r


def coupling_matrix(spec: ModelSpec) -> np.ndarray:
    """Pairwise J_ij of the power-law chain, Kac-rescaled when requested."""
    n = spec.n_sites
    mat = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                mat[i, j] = spec.J0 * ring_distance(i, j, n, spec.distance) ** (-spec.gamma)
    if spec.kac and n > 1:
        # rows are equal on the ring; the linear chain uses its largest row
        mat /= mat.sum(axis=1).max() / spec.J0
    return mat


def kac_divisor(spec: ModelSpec) -> float:
    raw = ModelSpec(**{**spec.to_dict(), "kac": False})
    return float(coupling_matrix(raw).sum(axis=1).max() / spec.J0)


def build_staggered_xxx(spec: ModelSpec) -> HamiltonianOp:
    """-J0 sum_i S_i.S_{i+1} - h_z sum_i (-1)^i S_i^z on a periodic ring."""
    if spec.kind != "staggered_xxx":
        raise ValueError(f"expected kind staggered_xxx, got {spec.kind}")
    n = spec.n_sites
    if n % 2:
        raise ValueError("staggered XXX needs even N")
    terms = []
    for i in range(n):
        terms += heisenberg_terms(i, (i + 1) % n, -spec.J0)
    if spec.h_z:
        for i in range(n):
            terms.append((-spec.h_z * (-1) ** i, ((i, "z"),)))
    return HamiltonianOp(n, tuple(terms), label="staggered_xxx")


def build_longrange_xxz(spec: ModelSpec) -> HamiltonianOp:
    """-(1/2) sum_{i!=j} J(r_ij) [S_i.S_j + delta S_i^z S_j^z]."""
    if spec.kind != "longrange_xxz":
        raise ValueError(f"expected kind longrange_xxz, got {spec.kind}")
    jmat = coupling_matrix(spec)
    n = spec.n_sites
    terms = []
    for i in range(n):
        for j in range(i + 1, n):
            terms += heisenberg_terms(i, j, -jmat[i, j], spec.delta)
    return HamiltonianOp(n, tuple(terms), label="longrange_xxz")


def build_ising_limit(spec: ModelSpec) -> HamiltonianOp:
    """Dominant Ising part -((1+delta)/2) sum_{i!=j} J(r_ij) S_i^z S_j^z."""
    if spec.kind != "ising_limit":
        raise ValueError(f"expected kind ising_limit, got {spec.kind}")
    jmat = coupling_matrix(spec)
    n = spec.n_sites
    terms = [
        (-(1.0 + spec.delta) * jmat[i, j], ((i, "z"), (j, "z")))
        for i in range(n)
        for j in range(i + 1, n)
    ]
    return HamiltonianOp(n, tuple(terms), label="ising_limit")


def build_oat(n_sites: int, chi: float) -> HamiltonianOp:
    """chi * S_z^2."""
    terms = [(chi * n_sites / 4.0, ())]
    terms += [
        (2.0 * chi, ((i, "z"), (j, "z")))
        for i in range(n_sites)
        for j in range(i + 1, n_sites)
    ]
    return HamiltonianOp(n_sites, tuple(terms), label="oat")


def attach_probe_coupling(n_sites: int, kappa: float) -> HamiltonianOp:
    """kappa * S_z (chain) * S_z (probe); the probe is site ``n_sites``."""
    check_capacity(n_sites + 1, MAX_SITES + 1)
    terms = tuple((kappa, ((i, "z"), (n_sites, "z"))) for i in range(n_sites)) if kappa else ()
    return HamiltonianOp(n_sites, terms, has_probe=True, label="probe_coupling")


def build(spec: ModelSpec) -> HamiltonianOp:
    if spec.kind == "staggered_xxx":
        return build_staggered_xxx(spec)
    if spec.kind == "longrange_xxz":
        return build_longrange_xxz(spec)
    if spec.kind == "ising_limit":
        return build_ising_limit(spec)
    return build_oat(spec.n_sites, spec.chi)


def translation_permutation(n_sites: int, shift: int = 1) -> np.ndarray:
    """Basis-index image under moving every site j to j + shift (mod N)."""
    idx = np.arange(1 << n_sites, dtype=np.int64)
    out = np.zeros_like(idx)
    for j in range(n_sites):
        out |= ((idx >> j) & 1) << ((j + shift) % n_sites)
    return out
