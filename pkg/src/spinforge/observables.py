"""Figures of merit: GHZ coherence and Bell correlator, squeezing, symmetric fidelity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import SpinforgeError
from .spinspace import (
    CollectiveFrame,
    StateVector,
    SymmetricProjector,
    apply_collective,
    dicke_sums,
    rotate,
)

FRAME_MODES = ("identity", "fixed_rotation", "optimize")
# the GHZ-like coherences of the twisting protocol are read after this rotation
FIXED_FRAME = CollectiveFrame((("y", math.pi / 2),))
MEAN_SPIN_THRESHOLD = 1e-8
_SCAN = 64
_REFINE_POINTS = 9
_REFINE_ROUNDS = 40


class UndefinedMeanSpinError(SpinforgeError, ValueError):
    """Squeezing needs a nonvanishing mean spin."""


@dataclass(frozen=True)
class BellResult:
    E: float
    Q: float
    frame: CollectiveFrame


@dataclass(frozen=True, eq=False)
class SqueezingResult:
    xi2: float
    mean_spin: np.ndarray
    optimal_angle: float


@dataclass(frozen=True, eq=False)
class TimeSeries:
    times: np.ndarray
    values: np.ndarray
    rescaled_axis: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values)
        if times.shape != values.shape[:1]:
            raise ValueError("times and values differ in length")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)


def _require_chain(state: StateVector) -> None:
    if state.has_probe:
        raise ValueError("expected a chain state without the probe qubit")


# --- GHZ coherence and Q --------------------------------------------------


def ghz_coherence(state: StateVector, frame: CollectiveFrame = CollectiveFrame()) -> float:
    """|<up^N|psi'>|^2 |<down^N|psi'>|^2 with psi' the frame-rotated state."""
    _require_chain(state)
    amps = frame.apply(state).amplitudes
    return float(abs(amps[0]) ** 2 * abs(amps[-1]) ** 2)


def q_from_coherence(E, n_sites: int):
    E = np.asarray(E, dtype=float)
    with np.errstate(divide="ignore"):
        q = n_sites + np.log2(E)
    return q if q.ndim else float(q)


def _direction_weights(beta: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-k factors of the up and down overlaps along polar angle beta."""
    k = np.arange(n + 1)
    c = np.cos(beta / 2)[..., None]
    s = np.sin(beta / 2)[..., None]
    up = c ** (n - k) * s**k
    down = (-s) ** (n - k) * c**k
    return up, down


def _coherence_grid(sums: np.ndarray, beta: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """E for every (state, beta, alpha) on an outer-product grid.

    ``sums`` is (N+1, T); beta, alpha are (T, B) and (T, A).  The frame with
    polar angle beta and azimuth alpha reads the state as R^dag psi with
    R = exp(-i alpha S_z) exp(-i beta S_y).
    """
    n = sums.shape[0] - 1
    up_w, down_w = _direction_weights(beta, n)
    phase = np.exp(-1j * alpha[..., None] * np.arange(n + 1))
    c_up = np.einsum("tbk,tak,kt->tba", up_w, phase, sums)
    c_dn = np.einsum("tbk,tak,kt->tba", down_w, phase, sums)
    return np.abs(c_up) ** 2 * np.abs(c_dn) ** 2


def optimize_frame_batch(amps: np.ndarray, n_sites: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Best collective frame for each column of ``amps``: (E, beta, alpha).

    Coarse 64 x 64 scan of (beta in [0, pi], alpha in [0, 2 pi)) followed by a
    shrinking local grid around the best point.
    """
    if amps.ndim == 1:
        amps = amps[:, None]
    sums = dicke_sums(amps, n_sites)
    T = amps.shape[1]
    beta = np.broadcast_to(np.linspace(0, np.pi, _SCAN), (T, _SCAN))
    alpha = np.broadcast_to(np.arange(_SCAN) * 2 * np.pi / _SCAN, (T, _SCAN))
    grid = _coherence_grid(sums, beta, alpha).reshape(T, -1)
    best = grid.argmax(axis=1)
    b0 = beta[0][best // _SCAN]
    a0 = alpha[0][best % _SCAN]
    e0 = grid[np.arange(T), best]
    width = np.pi / (_SCAN - 1)
    offsets = np.linspace(-1.0, 1.0, _REFINE_POINTS)
    for _ in range(_REFINE_ROUNDS):
        bs = b0[:, None] + width * offsets
        as_ = a0[:, None] + width * offsets
        local = _coherence_grid(sums, bs, as_).reshape(T, -1)
        pick = local.argmax(axis=1)
        gain = local[np.arange(T), pick] > e0
        b0 = np.where(gain, bs[np.arange(T), pick // _REFINE_POINTS], b0)
        a0 = np.where(gain, as_[np.arange(T), pick % _REFINE_POINTS], a0)
        e0 = np.where(gain, local[np.arange(T), pick], e0)
        width *= 0.5
    return e0, b0, np.mod(a0, 2 * np.pi)


def frame_from_angles(beta: float, alpha: float) -> CollectiveFrame:
    return CollectiveFrame((("z", -alpha), ("y", -beta)))


def coherence_batch(amps: np.ndarray, n_sites: int, frame_mode: str = "optimize") -> np.ndarray:
    """E for every column of an amplitude block."""
    if frame_mode not in FRAME_MODES:
        raise ValueError(f"frame_mode must be one of {FRAME_MODES}")
    if amps.ndim == 1:
        amps = amps[:, None]
    if frame_mode == "optimize":
        return optimize_frame_batch(amps, n_sites)[0]
    if frame_mode == "fixed_rotation":
        from .spinspace import apply_local_unitaries, single_site_rotation

        (axis, angle), = FIXED_FRAME.rotations
        amps = apply_local_unitaries(amps, n_sites, single_site_rotation(axis, angle))
    return np.abs(amps[0]) ** 2 * np.abs(amps[-1]) ** 2


def bell_Q(state: StateVector, frame_mode: str = "optimize") -> BellResult:
    """Q = N + log2 E; returns -inf when the coherence vanishes."""
    _require_chain(state)
    n = state.n_sites
    if frame_mode == "identity":
        frame = CollectiveFrame()
    elif frame_mode == "fixed_rotation":
        frame = FIXED_FRAME
    elif frame_mode == "optimize":
        e, b, a = optimize_frame_batch(state.amplitudes, n)
        frame = frame_from_angles(float(b[0]), float(a[0]))
        E = float(e[0])
        return BellResult(E, q_from_coherence(E, n), frame)
    else:
        raise ValueError(f"frame_mode must be one of {FRAME_MODES}")
    E = ghz_coherence(state, frame)
    return BellResult(E, q_from_coherence(E, n), frame)


# --- squeezing ------------------------------------------------------------


def _moments(amps: np.ndarray, n_sites: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean spin (3, T) and symmetrized second moments (3, 3, T)."""
    applied = [apply_collective(ax, amps, n_sites) for ax in "xyz"]
    mean = np.array([np.einsum("i...,i...->...", amps.conj(), v).real for v in applied])
    second = np.empty((3, 3) + amps.shape[1:])
    for a in range(3):
        for b in range(a, 3):
            val = np.einsum("i...,i...->...", applied[a].conj(), applied[b]).real
            second[a, b] = second[b, a] = val
    return mean, second


def _perp_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(ref, n)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def _xi2_from_moments(mean: np.ndarray, second: np.ndarray, n_sites: int) -> tuple[float, float]:
    length = float(np.linalg.norm(mean))
    if length < MEAN_SPIN_THRESHOLD:
        raise UndefinedMeanSpinError(f"mean spin {length:.3g} is too small for squeezing")
    e1, e2 = _perp_basis(mean / length)
    basis = np.stack([e1, e2])
    # S.e has zero mean for e perpendicular to <S>, so the covariance is the second moment
    cov = basis @ second @ basis.T
    w, v = np.linalg.eigh(cov)
    angle = float(np.arctan2(v[1, 0], v[0, 0]))
    return n_sites * float(w[0]) / length**2, angle


def spin_squeezing(state: StateVector) -> SqueezingResult:
    """N (Delta S_perp^2)_min / |<S>|^2 from the 2x2 perpendicular covariance."""
    _require_chain(state)
    mean, second = _moments(state.amplitudes, state.n_sites)
    xi2, angle = _xi2_from_moments(mean, second, state.n_sites)
    return SqueezingResult(xi2, mean, angle)


def squeezing_batch(amps: np.ndarray, n_sites: int) -> np.ndarray:
    """xi^2 per column; NaN where the mean spin vanishes."""
    mean, second = _moments(amps, n_sites)
    out = np.empty(amps.shape[1])
    for t in range(amps.shape[1]):
        try:
            out[t] = _xi2_from_moments(mean[:, t], second[:, :, t], n_sites)[0]
        except UndefinedMeanSpinError:
            out[t] = np.nan
    return out


# --- symmetric sector -----------------------------------------------------


def symmetric_fidelity(state: StateVector, projector: SymmetricProjector) -> float:
    """<psi|Pi|psi>."""
    _require_chain(state)
    if projector.n_sites != state.n_sites:
        raise ValueError("projector and state sizes differ")
    return float(np.sum(np.abs(projector.overlaps(state.amplitudes)) ** 2))


def fidelity_batch(amps: np.ndarray, n_sites: int) -> np.ndarray:
    sums = dicke_sums(amps, n_sites)
    weights = np.array([1.0 / comb(n_sites, k) for k in range(n_sites + 1)])
    return np.einsum("k,kt->t", weights, np.abs(sums) ** 2)


# --- phase imprint and harmonics -----------------------------------------


def phase_probe_state(state: StateVector, theta: float) -> StateVector:
    """exp(-i pi/2 S_x) exp(-i theta S_z) exp(-i pi/2 S_y) |psi>."""
    _require_chain(state)
    out = rotate(state, "y", math.pi / 2)
    out = rotate(out, "z", theta)
    return rotate(out, "x", math.pi / 2)


def theta_grid(n_theta: int) -> np.ndarray:
    return 2 * np.pi * np.arange(n_theta) / n_theta


def check_theta_sampling(n_theta: int, n_sites: int) -> None:
    if n_theta < 2 * n_sites + 1:
        raise ValueError(
            f"aliasing: {n_theta} phase samples cannot resolve harmonics up to {n_sites}"
            f" (need at least {2 * n_sites + 1})"
        )


def harmonic_spectrum(p0_of_theta, n_sites: int) -> np.ndarray:
    """|F_k|^2 for k = 0..N, F_k the Fourier-series coefficient of p0 at e^{-ik theta}."""
    p0 = np.asarray(p0_of_theta, dtype=float)
    check_theta_sampling(p0.size, n_sites)
    coeffs = np.fft.fft(p0) / p0.size
    return np.abs(coeffs[: n_sites + 1]) ** 2
