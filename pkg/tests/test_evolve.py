import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import expm_hermitian, staggered_dense
from spinforge.errors import NumericalError
from spinforge.evolve import (
    build_trotter_plan,
    default_trotter_steps,
    diagonalize,
    evolve_block,
    exact_evolve,
    trotter_evolve,
    trotter_series,
    trotter_step_matrix,
)
from spinforge.models import ModelSpec, attach_probe_coupling, build, build_oat
from spinforge.observables import bell_Q
from spinforge.spinspace import (
    coherent_x_state,
    magnetization_distribution,
    random_state,
    random_symmetric_state,
)

KINDS = [
    ModelSpec("staggered_xxx", 6, h_z=0.15),
    ModelSpec("longrange_xxz", 6, delta=0.5, gamma=1.0),
    ModelSpec("ising_limit", 6, delta=0.5, gamma=1.0),
    ModelSpec("oat", 6, chi=0.2),
]


def _dist(a, b):
    return float(np.linalg.norm(a.amplitudes - b.amplitudes))


# --- exact evolution --------------------------------------------------------


def test_time_zero_returns_input():
    psi = random_state(4, np.random.default_rng(0))
    (out,) = exact_evolve(build(ModelSpec("staggered_xxx", 4, h_z=0.1)), psi, [0.0])
    assert out is psi


def test_oat_ghz_time_gives_max_q():
    n, chi = 8, 0.3
    (psi,) = exact_evolve(build_oat(n, chi), coherent_x_state(n), [math.pi / (2 * chi)])
    assert bell_Q(psi, "optimize").Q == pytest.approx(n - 2, abs=1e-6)


def test_energy_conserved():
    spec = ModelSpec("staggered_xxx", 8, h_z=0.1)
    H = build(spec)
    states = exact_evolve(H, coherent_x_state(8), np.linspace(0, 400, 400))
    energies = np.array([s.expectation(H).real for s in states])
    assert np.ptp(energies) < 1e-10


@pytest.mark.parametrize("spec", KINDS, ids=lambda s: s.kind)
def test_norm_and_pm_conserved(spec):
    psi0 = random_state(6, np.random.default_rng(1))
    _, p0 = magnetization_distribution(psi0)
    for psi in exact_evolve(build(spec), psi0, [0.3, 7.0, 55.5]):
        assert abs(psi.norm() - 1) < 1e-10
        np.testing.assert_allclose(magnetization_distribution(psi)[1], p0, atol=1e-10)


@given(st.floats(-20, 20), st.integers(0, 2**31))
def test_matches_matrix_exponential(t, seed):
    rng = np.random.default_rng(seed)
    H = build(ModelSpec("staggered_xxx", 4, J0=1.0, h_z=rng.uniform(-1, 1)))
    psi = random_state(4, rng)
    (out,) = exact_evolve(H, psi, [t])
    ref = expm_hermitian(H.dense(), t) @ psi.amplitudes
    np.testing.assert_allclose(out.amplitudes, ref, atol=1e-10)


def test_propagator_reconstruction():
    for H in (build(KINDS[1]), build_oat(5, 0.4), attach_probe_coupling(4, 1.0)):
        prop = diagonalize(H)
        dense = H.dense()
        scale = max(np.abs(dense).max(), 1.0)
        assert np.abs(prop.reconstruct() - dense).max() / scale < 1e-10
        v = prop.eigenvectors
        np.testing.assert_allclose(v.conj().T @ v, np.eye(H.dim), atol=1e-12)


def test_shared_propagator_and_block_agree():
    H = build(KINDS[1])
    psi = random_symmetric_state(6, np.random.default_rng(2))
    prop = diagonalize(H)
    times = [0.5, 1.5]
    block = evolve_block(H, psi, times, prop)
    states = exact_evolve(H, psi, times)
    for k, s in enumerate(states):
        np.testing.assert_allclose(block[:, k], s.amplitudes, atol=1e-12)


def test_dimension_mismatch_and_bad_times():
    H = build(ModelSpec("staggered_xxx", 4))
    with pytest.raises(ValueError):
        exact_evolve(H, coherent_x_state(5), [1.0])
    with pytest.raises(ValueError):
        exact_evolve(H, coherent_x_state(4), [float("inf")])


def test_eigensolver_failure_is_numerical_error(monkeypatch):
    def boom(*_):
        raise np.linalg.LinAlgError("no convergence")

    monkeypatch.setattr(np.linalg, "eigh", boom)
    with pytest.raises(NumericalError):
        diagonalize(build(ModelSpec("staggered_xxx", 4, h_z=0.1)))


# --- Trotter plan -----------------------------------------------------------


def test_plan_bonds_n4():
    plan = build_trotter_plan(ModelSpec("staggered_xxx", 4, h_z=0.1), 1.0, 10)
    assert set(plan.even_bonds) == {(0, 1), (2, 3)}
    assert set(plan.odd_bonds) == {(1, 2), (3, 0)}
    assert plan.dt == pytest.approx(0.1)


def test_plan_gate_counts():
    n = 8
    plan = build_trotter_plan(ModelSpec("staggered_xxx", n, h_z=0.1), 1.0, 3)
    assert plan.two_site_gates_per_step == (n // 2 + n // 2) * 2
    assert plan.field_layers_per_step == 2
    assert plan.layers[0][0] == "field" and plan.layers[-1][0] == "field"


def test_plan_layers_have_disjoint_supports():
    plan = build_trotter_plan(ModelSpec("staggered_xxx", 10, h_z=0.1), 1.0, 1)
    for layer in plan.layers:
        if layer[0] == "bonds":
            sites = [s for bond in layer[1] for s in bond]
            assert len(sites) == len(set(sites))


def test_plan_field_angles():
    plan = build_trotter_plan(ModelSpec("staggered_xxx", 4, h_z=0.3), 2.0, 4)
    angles = plan.layers[0][1]
    np.testing.assert_allclose(np.abs(angles), 0.3 * 0.5 / 2)


def test_plan_errors():
    with pytest.raises(ValueError):
        build_trotter_plan(ModelSpec("longrange_xxz", 4), 1.0, 2)
    with pytest.raises(ValueError):
        build_trotter_plan(ModelSpec("staggered_xxx", 4), 1.0, 0)
    with pytest.raises(ValueError):
        trotter_evolve(ModelSpec("longrange_xxz", 4), coherent_x_state(4), 1.0, 3)


def test_zero_field_layer_is_identity():
    # at h_z = 0 the step is [U_e U_o]^2 alone: compare with explicit bond exponentials
    n, dt = 4, 0.3
    spec = ModelSpec("staggered_xxx", n)
    from oracles import SINGLE, site_op

    def bond(i, j):
        return -sum(site_op(SINGLE[a], i, n) @ site_op(SINGLE[a], j, n) for a in "xyz")

    he = bond(0, 1) + bond(2, 3)
    ho = bond(1, 2) + bond(3, 0)
    ue, uo = expm_hermitian(he, dt / 2), expm_hermitian(ho, dt / 2)
    ref = ue @ uo @ ue @ uo
    np.testing.assert_allclose(trotter_step_matrix(spec, dt, 1), ref, atol=1e-12)


def test_step_matches_quoted_product_with_field():
    n, dt, h = 4, 0.4, 0.7
    spec = ModelSpec("staggered_xxx", n, h_z=h)
    from oracles import SINGLE, SZ, site_op

    def bond(i, j):
        return -sum(site_op(SINGLE[a], i, n) @ site_op(SINGLE[a], j, n) for a in "xyz")

    v = -h * sum((-1) ** i * site_op(SZ, i, n) for i in range(n))
    ue = expm_hermitian(bond(0, 1) + bond(2, 3), dt / 2)
    uo = expm_hermitian(bond(1, 2) + bond(3, 0), dt / 2)
    uv = expm_hermitian(v, dt / 2)
    first = uv @ ue @ uo @ ue @ uo @ uv
    second = uv @ uo @ ue @ uo @ ue @ uv
    np.testing.assert_allclose(trotter_step_matrix(spec, dt, 1), first, atol=1e-12)
    np.testing.assert_allclose(trotter_step_matrix(spec, dt, 2), second @ first, atol=1e-12)


def test_trotter_unitary():
    u = trotter_step_matrix(ModelSpec("staggered_xxx", 6, h_z=0.2), 0.37, 3)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(64), atol=1e-10)


@given(st.integers(1, 40), st.integers(0, 2**31))
def test_trotter_preserves_sector_weights(n_steps, seed):
    rng = np.random.default_rng(seed)
    psi = random_state(6, rng)
    out = trotter_evolve(ModelSpec("staggered_xxx", 6, h_z=rng.uniform(0, 1)), psi, rng.uniform(0, 10), n_steps)
    np.testing.assert_allclose(magnetization_distribution(out)[1], magnetization_distribution(psi)[1], atol=1e-10)
    assert abs(out.norm() - 1) < 1e-10


def test_trotter_converges_n6():
    spec = ModelSpec("staggered_xxx", 6, h_z=0.15)
    psi0 = coherent_x_state(6)
    (exact,) = exact_evolve(build(spec), psi0, [5.0])
    assert _dist(trotter_evolve(spec, psi0, 5.0, 2000), exact) < 1e-3


def test_trotter_second_order_slope():
    spec = ModelSpec("staggered_xxx", 6, h_z=0.15)
    psi0 = random_state(6, np.random.default_rng(4))
    (exact,) = exact_evolve(build(spec), psi0, [5.0])
    steps = np.array([20, 40, 80, 160])
    errs = np.array([_dist(trotter_evolve(spec, psi0, 5.0, int(k)), exact) for k in steps])
    slope = np.polyfit(np.log(5.0 / steps), np.log(errs), 1)[0]
    assert 1.8 <= slope <= 2.2


def test_trotter_oracle_n4():
    spec = ModelSpec("staggered_xxx", 4, h_z=0.3)
    rng = np.random.default_rng(9)
    psi0 = random_state(4, rng)
    t = rng.uniform(0.1, 1.0)
    (exact,) = exact_evolve(build(spec), psi0, [t])
    assert _dist(trotter_evolve(spec, psi0, t, 10_000), exact) < 1e-6


def test_trotter_series_matches_stepwise():
    spec = ModelSpec("staggered_xxx", 4, h_z=0.3)
    psi0 = coherent_x_state(4)
    times = np.arange(5) * 0.8
    block, per, dt = trotter_series(spec, psi0, times, max_dt_energy=0.1)
    assert per % 2 == 0 and dt * 1.0 <= 0.1 + 1e-12
    for k, t in enumerate(times):
        ref = trotter_evolve(spec, psi0, t, per * k) if k else psi0
        np.testing.assert_allclose(block[:, k], ref.amplitudes, atol=1e-11)
    with pytest.raises(ValueError):
        trotter_series(spec, psi0, [0.0, 1.0, 3.0])


def test_default_step_count():
    spec = ModelSpec("staggered_xxx", 4, J0=1.0, h_z=2.0)
    n = default_trotter_steps(1.0, spec)
    assert n == 40 and 1.0 / n * 2.0 <= 0.05
