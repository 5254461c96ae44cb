"""Single probe-qubit readout of the magnetization distribution and the extremal Dicke coherence."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, SpinforgeError
from .evolve import exact_evolve
from .models import attach_probe_coupling
from .observables import check_theta_sampling, phase_probe_state, theta_grid
from .spinspace import StateVector, wigner_d

KAPPA = 1.0
_COND_TOL = 1e-14


class UnsupportedParityError(SpinforgeError, ValueError):
    """Extraction needs an m = 0 row, i.e. even N."""


class ConditioningError(NumericalError):
    """The Wigner element used for normalization is numerically zero."""


def tau_grid(n_sites: int) -> np.ndarray:
    return 2 * np.pi * np.arange(n_sites + 1) / (n_sites + 1)


@dataclass(frozen=True, eq=False)
class ProbeGrid:
    """Coherence samples a[k, j] = a(tau_k, theta_j)."""

    n_sites: int
    a: np.ndarray = field(repr=False)
    tau_grid: np.ndarray = field(repr=False)
    theta_grid: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.a, dtype=complex)
        shape = (self.n_sites + 1, np.asarray(self.theta_grid).size)
        if a.shape != shape:
            raise ValueError(f"coherence grid has shape {a.shape}, expected {shape}")
        object.__setattr__(self, "a", a)

    @property
    def n_theta(self) -> int:
        return self.a.shape[1]

    def rows(self):
        for k, tau in enumerate(self.tau_grid):
            for j, theta in enumerate(self.theta_grid):
                v = self.a[k, j]
                yield k, float(tau), float(theta), float(v.real), float(v.imag)

    def to_csv(self, stream=None) -> str:
        buf = stream if stream is not None else io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "tau", "theta", "re_a", "im_a"])
        for k, tau, theta, re, im in self.rows():
            w.writerow([k] + [f"{x:.17g}" for x in (tau, theta, re, im)])
        return buf.getvalue() if stream is None else ""


def attach_probe(chain_state: StateVector) -> StateVector:
    """Chain state times the probe in |+x>; the probe is the most significant qubit."""
    if chain_state.has_probe:
        raise ValueError("state already carries a probe")
    half = chain_state.amplitudes / np.sqrt(2.0)
    return StateVector(chain_state.n_sites, np.concatenate([half, half]), has_probe=True)


def probe_density_matrix(composite: StateVector) -> np.ndarray:
    """Reduced 2x2 probe state, rows and columns ordered (up, down)."""
    if not composite.has_probe:
        raise ValueError("state has no probe qubit")
    psi = composite.amplitudes.reshape(2, -1)
    return psi @ psi.conj().T


def probe_coherence(chain_state: StateVector, tau: float) -> complex:
    """<up|rho_p|down> after evolving under kappa S_z S_z^(p) for tau = kappa t.

    With the probe up at S_z^(p) = +1/2 this element equals
    (1/2) sum_m p_m exp(-i m tau); the other off-diagonal element is its conjugate.
    """
    H = attach_probe_coupling(chain_state.n_sites, KAPPA)
    (out,) = exact_evolve(H, attach_probe(chain_state), [tau / KAPPA])
    return complex(probe_density_matrix(out)[0, 1])


def sample_probe_grid(psi_t: StateVector, n_theta: int, pipeline: bool = True) -> ProbeGrid:
    """a(tau_k, theta_j) on tau_k = 2 pi k / (N+1) and a uniform theta grid.

    ``pipeline=False`` skips the phase-imprint rotations, so every column
    samples ``psi_t`` itself.
    """
    n = psi_t.n_sites
    check_theta_sampling(n_theta, n)
    taus = tau_grid(n)
    thetas = theta_grid(n_theta)
    a = np.empty((n + 1, n_theta), dtype=complex)
    for j, theta in enumerate(thetas):
        state = phase_probe_state(psi_t, theta) if pipeline else psi_t
        for k, tau in enumerate(taus):
            a[k, j] = probe_coherence(state, tau)
    return ProbeGrid(n, a, taus, thetas)


def reconstruct_pm(grid: ProbeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Invert the coherence samples: (m ascending, p_m table of shape (N+1, N_theta)).

    p_m = [2 / (N+1)] sum_k a(tau_k) exp(+i m tau_k) is the exact inverse of
    a(tau) = (1/2) sum_m p_m exp(-i m tau) on the N+1 point grid.
    """
    n = grid.n_sites
    if grid.a.shape[0] != n + 1:
        raise ValueError("incomplete coherence grid")
    m = np.arange(n + 1) - 0.5 * n
    kernel = np.exp(1j * np.outer(m, grid.tau_grid))
    table = 2.0 / (n + 1) * (kernel @ grid.a)
    return m, table.real


def extract_ghz_coherence(p0_of_theta, n_sites: int) -> complex:
    """Coefficient of exp(-i N theta) in p_0(theta) divided by d_{0,N/2}(pi/2)^2.

    Only the magnitude is convention independent.
    """
    if n_sites % 2:
        raise UnsupportedParityError("extraction needs even N (an m = 0 row)")
    p0 = np.asarray(p0_of_theta, dtype=float)
    check_theta_sampling(p0.size, n_sites)
    J = n_sites / 2
    d = wigner_d(J, np.pi / 2).element(0, J)
    if abs(d) < _COND_TOL:
        raise ConditioningError(f"d_(0,{J})(pi/2) = {d:.3g} is too small")
    thetas = theta_grid(p0.size)
    coeff = np.sum(p0 * np.exp(1j * n_sites * thetas)) / p0.size
    return complex(coeff / d**2)


def certify(psi_t: StateVector, n_theta: int | None = None) -> dict:
    """Full protocol: sample, reconstruct, extract; returns rho and the probe Q."""
    n = psi_t.n_sites
    n_theta = n_theta if n_theta is not None else 4 * (n + 1)
    grid = sample_probe_grid(psi_t, n_theta)
    m, table = reconstruct_pm(grid)
    rho = extract_ghz_coherence(table[n // 2], n)
    with np.errstate(divide="ignore"):
        q = n + float(np.log2(abs(rho) ** 2))
    return {"grid": grid, "m": m, "p_m": table, "rho": rho, "Q": q}
