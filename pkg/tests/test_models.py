import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import collective, heisenberg_dense, staggered_dense
from spinforge.errors import CapacityError
from spinforge.models import (
    HamiltonianOp,
    ModelSpec,
    attach_probe_coupling,
    build,
    build_longrange_xxz,
    build_oat,
    build_staggered_xxx,
    coupling_matrix,
    kac_divisor,
    translation_permutation,
)
from spinforge.spinspace import all_up_state, random_state
from spinforge.swt import chi_staggered


def _all_kinds(n=6):
    return [
        ModelSpec("staggered_xxx", n, h_z=0.15),
        ModelSpec("longrange_xxz", n, delta=0.4, gamma=1.3),
        ModelSpec("ising_limit", n, delta=0.4, gamma=1.3),
        ModelSpec("oat", n, chi=0.3),
    ]


# --- spec validation --------------------------------------------------------


def test_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec("staggered_xxx", 5)
    with pytest.raises(ValueError):
        ModelSpec("heisenberg", 4)
    with pytest.raises(ValueError):
        ModelSpec("longrange_xxz", 4, J0=0.0)
    with pytest.raises(ValueError):
        ModelSpec("longrange_xxz", 4, gamma=-1.0)
    with pytest.raises(ValueError):
        ModelSpec("oat", 4)
    with pytest.raises(ValueError):
        ModelSpec("longrange_xxz", 4, distance="euclid")
    with pytest.raises(CapacityError):
        ModelSpec("longrange_xxz", 100)


# --- staggered XXX ----------------------------------------------------------


def test_staggered_ferromagnet_energy():
    H = build_staggered_xxx(ModelSpec("staggered_xxx", 4))
    assert all_up_state(4).expectation(H).real == pytest.approx(-1.0, abs=1e-14)


def test_staggered_field_averages_out():
    H = build_staggered_xxx(ModelSpec("staggered_xxx", 4, h_z=0.2))
    assert all_up_state(4).expectation(H).real == pytest.approx(-1.0, abs=1e-14)


def test_staggered_matches_kron_oracle():
    H = build(ModelSpec("staggered_xxx", 6, J0=0.7, h_z=0.15))
    np.testing.assert_allclose(H.dense(), staggered_dense(6, 0.7, 0.15), atol=1e-13)


def test_staggered_rejects_odd():
    with pytest.raises(ValueError):
        build_staggered_xxx(ModelSpec("longrange_xxz", 5))


# --- long-range XXZ ---------------------------------------------------------


def test_kac_uniform_couplings_gamma0():
    jmat = coupling_matrix(ModelSpec("longrange_xxz", 5, gamma=0.0))
    off = jmat[~np.eye(5, dtype=bool)]
    np.testing.assert_allclose(off, 0.25, atol=1e-15)


def test_su2_invariance_at_delta0():
    H = build(ModelSpec("longrange_xxz", 6, gamma=1.0)).dense()
    s2 = sum(collective(a, 6) @ collective(a, 6) for a in "xyz")
    assert np.abs(H @ s2 - s2 @ H).max() < 1e-12


def test_power_law_ratio_without_kac():
    jmat = coupling_matrix(ModelSpec("longrange_xxz", 8, gamma=6.0, kac=False))
    assert jmat[0, 2] / jmat[0, 1] == pytest.approx(2.0**-6, rel=1e-14)


@pytest.mark.parametrize("gamma", [0, 0.5, 1, 2, 6])
@pytest.mark.parametrize("n", [6, 8, 10])
def test_kac_row_sum(gamma, n):
    jmat = coupling_matrix(ModelSpec("longrange_xxz", n, J0=1.3, gamma=gamma))
    np.testing.assert_allclose(jmat.sum(axis=1), 1.3, atol=1e-12)


def test_kac_divisor_gamma0():
    assert kac_divisor(ModelSpec("longrange_xxz", 7, gamma=0.0)) == pytest.approx(6.0)


def test_longrange_matches_kron_oracle():
    spec = ModelSpec("longrange_xxz", 5, delta=0.7, gamma=1.5)
    np.testing.assert_allclose(build(spec).dense(), heisenberg_dense(coupling_matrix(spec), 0.7), atol=1e-13)


def test_linear_distance_is_not_translation_invariant():
    jmat = coupling_matrix(ModelSpec("longrange_xxz", 6, gamma=1.0, distance="linear", kac=False))
    assert jmat[0, 5] == pytest.approx(5.0**-1)
    assert jmat[0, 5] != jmat[0, 1]


@pytest.mark.parametrize("n", [4, 6])
def test_short_range_limit(n):
    lr = build(ModelSpec("longrange_xxz", n, gamma=8.0, kac=False)).dense()
    nn = build(ModelSpec("staggered_xxx", n)).dense()
    assert np.abs(lr - nn).max() < 2.0**-8 * n


# --- OAT and probe ----------------------------------------------------------


def test_oat_n2_spectrum():
    np.testing.assert_allclose(build_oat(2, 1.0).diagonal(), [1, 0, 0, 1], atol=1e-15)


def test_oat_diagonal_m_squared():
    H = build_oat(5, 0.37)
    sz = np.diag(collective("z", 5)).real
    assert H.is_diagonal
    np.testing.assert_allclose(H.diagonal(), 0.37 * sz**2, atol=1e-14)


def test_oat_chi_matches_staggered_closed_form():
    chi = chi_staggered(10, 1.0, 0.15)
    assert chi == pytest.approx(0.00125, rel=1e-14)
    H = build(ModelSpec("oat", 10, chi=chi))
    assert H.diagonal()[0] == pytest.approx(chi * 25, rel=1e-13)


def test_probe_coupling_single_site():
    H = attach_probe_coupling(1, 1.0)
    assert H.n_qubits == 2 and H.is_diagonal
    # index = chain bit + 2 * probe bit
    np.testing.assert_allclose(H.diagonal(), [0.25, -0.25, -0.25, 0.25], atol=1e-15)


def test_probe_coupling_zero():
    H = attach_probe_coupling(3, 0.0)
    np.testing.assert_allclose(H.dense(), 0)


def test_probe_coupling_preserves_sector_populations():
    H = attach_probe_coupling(3, 0.8)
    psi = random_state(4, np.random.default_rng(5)).amplitudes
    out = np.exp(-1j * 2.3 * H.diagonal()) * psi
    np.testing.assert_allclose(np.abs(out), np.abs(psi), atol=1e-15)


def test_probe_capacity():
    with pytest.raises(CapacityError):
        attach_probe_coupling(15, 1.0)


# --- invariants over all kinds ----------------------------------------------


@pytest.mark.parametrize("spec", _all_kinds(), ids=lambda s: s.kind)
def test_hermitian_and_conserves_sz(spec):
    H = build(spec).dense()
    sz = collective("z", spec.n_sites)
    assert np.abs(H - H.conj().T).max() < 1e-12
    assert np.abs(H @ sz - sz @ H).max() < 1e-12


@pytest.mark.parametrize(
    "spec",
    [ModelSpec("staggered_xxx", 6), ModelSpec("longrange_xxz", 7, delta=0.3, gamma=1.7)],
    ids=["xxx", "xxz"],
)
def test_translation_covariance(spec):
    H = build(spec).dense()
    perm = translation_permutation(spec.n_sites)
    T = np.zeros_like(H)
    T[perm, np.arange(len(perm))] = 1
    assert np.abs(T @ H @ T.T - H).max() < 1e-12


def test_staggered_field_breaks_translation_by_one():
    H = build(ModelSpec("staggered_xxx", 4, h_z=0.3)).dense()
    perm = translation_permutation(4)
    T = np.zeros_like(H)
    T[perm, np.arange(16)] = 1
    assert np.abs(T @ H @ T.T - H).max() > 0.1


@given(st.integers(0, 2**31))
def test_apply_matches_dense(seed):
    rng = np.random.default_rng(seed)
    spec = ModelSpec("longrange_xxz", 5, delta=rng.uniform(-2, 2), gamma=rng.uniform(0, 4))
    H = build(spec)
    psi = random_state(5, rng).amplitudes
    np.testing.assert_allclose(H.apply(psi), H.dense() @ psi, atol=1e-12)


def test_basis_action_and_sector_matrix():
    H = build(ModelSpec("staggered_xxx", 6, h_z=0.2))
    dense = H.dense()
    for b in (0, 5, 37):
        col = np.zeros(64, dtype=complex)
        for t, a in H.basis_action(b).items():
            col[t] += a
        np.testing.assert_allclose(col, dense[:, b], atol=1e-14)
    sector = [1 << j for j in range(6)]
    np.testing.assert_allclose(H.sector_matrix(sector), dense[np.ix_(sector, sector)], atol=1e-14)
    with pytest.raises(ValueError):
        H.sector_matrix([1, 2])


def test_operator_algebra():
    a = build_oat(3, 1.0)
    b = a + a.scaled(2.0)
    np.testing.assert_allclose(b.dense(), 3 * a.dense(), atol=1e-14)
    with pytest.raises(ValueError):
        HamiltonianOp(2, ((1.0, ((0, "x"), (0, "y"))),))._pauli
    with pytest.raises(ValueError):
        HamiltonianOp(2, ((1.0, ((3, "x"),)),))


def test_term_level_operator_beyond_dense_cap():
    H = build(ModelSpec("staggered_xxx", 40, h_z=0.1))
    e = H.basis_action(0)[0]
    assert e.real == pytest.approx(-10.0, abs=1e-12)
    with pytest.raises(CapacityError):
        H.dense()


def test_spec_roundtrip_dict():
    spec = ModelSpec("longrange_xxz", 6, delta=0.2, gamma=math.pi)
    assert ModelSpec(**spec.to_dict()) == spec
