"""Magnon dispersions, effective OAT couplings, and their numerical extraction.

Fourier convention throughout: f~(q) = N^{-1/2} sum_j f_j e^{i q j}, with
sites j = 0..N-1 and momenta q_k = 2 pi k / N.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SingularityError
from .models import HamiltonianOp, ModelSpec, coupling_matrix

VALIDITY_THRESHOLD = 0.3
_LEVI_CIVITA = np.zeros((3, 3, 3))
for _a, _b, _c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _LEVI_CIVITA[_a, _b, _c] = 1.0
    _LEVI_CIVITA[_b, _a, _c] = -1.0


@dataclass(frozen=True, eq=False)
class CouplingProfile:
    """J(r) for ring offsets r = 1..N-1 (``J_of_r[r - 1]``)."""

    n_sites: int
    J_of_r: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.J_of_r, dtype=float)
        if arr.shape != (self.n_sites - 1,):
            raise ValueError(f"expected {self.n_sites - 1} couplings, got {arr.shape}")
        object.__setattr__(self, "J_of_r", arr)

    @classmethod
    def nearest_neighbor(cls, n_sites: int, J0: float = 1.0) -> "CouplingProfile":
        j = np.zeros(n_sites - 1)
        j[0] += J0
        j[-1] += J0
        return cls(n_sites, j)

    @classmethod
    def from_spec(cls, spec: ModelSpec) -> "CouplingProfile":
        """Row of the pair-coupling matrix seen from site 0."""
        if spec.kind == "staggered_xxx":
            return cls.nearest_neighbor(spec.n_sites, spec.J0)
        return cls(spec.n_sites, coupling_matrix(spec)[0, 1:])

    def fourier(self, q) -> np.ndarray:
        """J~(q) = sum_r J(r) e^{i q r}; real part (the profile is ring-symmetric)."""
        r = np.arange(1, self.n_sites)
        q = np.asarray(q, dtype=float)
        return (np.exp(1j * np.multiply.outer(q, r)) @ self.J_of_r).real

    @property
    def total(self) -> float:
        return float(self.J_of_r.sum())

    def momenta(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_sites) / self.n_sites


@dataclass(frozen=True, eq=False)
class FieldProfile:
    """Per-site field components h_j^alpha, shape (N, 3) in (x, y, z) order."""

    h: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.h, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError(f"field array must have shape (N, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field entries must be finite")
        object.__setattr__(self, "h", arr)

    @property
    def n_sites(self) -> int:
        return self.h.shape[0]

    @classmethod
    def staggered_z(cls, n_sites: int, h_z: float) -> "FieldProfile":
        """The one-body part -h_z sum_j (-1)^j S_j^z of the staggered XXX chain."""
        h = np.zeros((n_sites, 3))
        h[:, 2] = -h_z * (-1.0) ** np.arange(n_sites)
        return cls(h)

    def fourier(self) -> np.ndarray:
        """Modes of the inhomogeneous part, shape (N momenta, 3)."""
        dh = self.h - self.h.mean(axis=0)
        n = self.n_sites
        j = np.arange(n)
        q = 2 * np.pi * np.arange(n) / n
        return np.exp(1j * np.outer(q, j)) @ dh / np.sqrt(n)


@dataclass(frozen=True, eq=False)
class ChiTensor:
    chi: np.ndarray
    linear_term: np.ndarray


def _on_grid(q: float, n_sites: int) -> bool:
    k = q * n_sites / (2 * np.pi)
    return abs(k - round(k)) < 1e-9


def dispersion(profile: CouplingProfile, delta: float, q: float) -> float:
    """eps(q) = [(1 + delta) J~(0) - J~(q)] / 2."""
    if not _on_grid(q, profile.n_sites):
        raise ValueError(f"q={q} is not on the momentum grid 2 pi k / {profile.n_sites}")
    return 0.5 * ((1.0 + delta) * profile.total - float(profile.fourier(q)))


def dispersion_curve(profile: CouplingProfile, delta: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    q = profile.momenta()
    return q, 0.5 * ((1.0 + delta) * profile.total - profile.fourier(q))


def magnon_gap(profile: CouplingProfile, delta: float = 0.0) -> float:
    """Minimum of the dispersion over nonzero momenta."""
    if profile.n_sites < 2:
        raise ValueError("a gap needs at least two sites")
    _, eps = dispersion_curve(profile, delta)
    return float(eps[1:].min())


def chi_staggered(n_sites: int, J0: float, h_z: float) -> float:
    """h_z^2 / (2 J0 (N - 1))."""
    if n_sites < 4 or n_sites % 2:
        raise ValueError("staggered coupling needs even N >= 4")
    return h_z**2 / (2.0 * J0 * (n_sites - 1))


def chi_xxz(n_sites: int, profile: CouplingProfile, delta: float) -> float:
    """-(delta / 2) J~(0) / (N - 1), exact inside the symmetric sector."""
    if n_sites < 2:
        raise ValueError("chi_xxz needs N >= 2")
    return -0.5 * delta * profile.total / (n_sites - 1)


def analytic_chi(spec: ModelSpec) -> float:
    """Effective OAT coupling predicted for a model."""
    if spec.kind == "oat":
        return float(spec.chi)
    if spec.kind == "staggered_xxx":
        return chi_staggered(spec.n_sites, spec.J0, spec.h_z)
    profile = CouplingProfile.from_spec(spec)
    if spec.kind == "ising_limit":
        # projection of -(1+delta)/2 sum J S^z S^z onto the Dicke sector
        return -0.5 * (1.0 + spec.delta) * profile.total / (spec.n_sites - 1)
    return chi_xxz(spec.n_sites, profile, spec.delta)


def chi_tensor(profile: CouplingProfile, field: FieldProfile) -> ChiTensor:
    """Second-order collective couplings induced by an inhomogeneous one-body field."""
    n = profile.n_sites
    if field.n_sites != n:
        raise ValueError("profile and field sizes differ")
    q, eps = dispersion_curve(profile, 0.0)
    scale = max(abs(profile.total), 1.0)
    zero = np.abs(eps[1:]) < 1e-12 * scale
    if np.any(zero):
        bad = q[1:][zero]
        raise SingularityError(f"magnon energy vanishes at q = {bad.tolist()}")
    modes = field.fourier()[1:]
    # Lambda_ab = sum_{q != 0} h_a(q) h_b(-q) / eps(q); h_b(-q) = conj(h_b(q)) for a real field
    lam = np.einsum("qa,qb,q->ab", modes, modes.conj(), 1.0 / eps[1:])
    chi = (lam + lam.T).real / (2.0 * n * (n - 1))
    # B_c = -(i / 2N) sum_ab eps_abc Lambda_ab
    linear = (-0.5j / n * np.einsum("abc,ab->c", _LEVI_CIVITA, lam)).real
    return ChiTensor(chi, linear)


# --- single-flip sector -----------------------------------------------------


def _flip_sector(H: HamiltonianOp, n_sites: int) -> tuple[float, np.ndarray]:
    if H.has_probe:
        raise ValueError("expected a bare chain operator")
    if H.n_sites != n_sites:
        raise ValueError(f"operator has {H.n_sites} sites, expected {n_sites}")
    e_f = H.basis_action(0).get(0, 0.0)
    mat = H.sector_matrix([1 << j for j in range(n_sites)])
    return float(np.real(e_f)), mat


def one_magnon_energies(H: HamiltonianOp) -> tuple[np.ndarray, np.ndarray]:
    """Travelling-wave energies <q|H|q> - E_F on the grid q_k = 2 pi k / N."""
    n = H.n_sites
    e_f, mat = _flip_sector(H, n)
    scale = max(float(np.abs(mat).max()), 1.0)
    shifted = np.array([np.roll(mat[j], -j) for j in range(n)])
    if np.abs(shifted - shifted[0]).max() > 1e-12 * scale:
        raise ValueError("operator is not translation invariant in the single-flip sector")
    q = 2 * np.pi * np.arange(n) / n
    waves = np.exp(1j * np.outer(np.arange(n), q)) / np.sqrt(n)
    energies = np.einsum("jk,jl,lk->k", waves.conj(), mat, waves).real - e_f
    return q, energies


def chi_numeric(H: HamiltonianOp, n_sites: int) -> float:
    """(E_F - E_W) / (N - 1) from the fully polarized state and the single-flip sector."""
    e_f, mat = _flip_sector(H, n_sites)
    e_w = float(np.linalg.eigvalsh(mat)[0])
    return (e_f - e_w) / (n_sites - 1)


def perturbative_validity(h: float, gap: float) -> tuple[float, bool]:
    """h / gap and whether it sits inside the h / gap <= 0.3 window."""
    if not gap > 0:
        raise ValueError(f"gap must be positive, got {gap}")
    ratio = abs(h) / gap
    return ratio, ratio <= VALIDITY_THRESHOLD
