import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from actionnoise.core import (
    SIGMA_X, SIGMA_Z, DensityOperator, HamiltonianTrajectory, NoiseConfig, TimeGrid,
    basis_state, dissipator, eigenbasis_equations_of_motion, eigenbasis_populations_coherences,
    eigensystem_series, instantaneous_eigensystem, master_rhs, nonadiabatic_coupling, propagate,
    pure_state, stochastic_ensemble, stochastic_trajectory, trace_distance,
)
from actionnoise.integrate import IntegrationError, dopri5


def random_hermitian(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (a + a.conj().T) / 2


def random_state(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    r = a @ a.conj().T
    return r / np.trace(r)


def driven_qubit(t_f=0.05, d0=150.0):
    return HamiltonianTrajectory(
        2, lambda t: 0.5 * d0 * (np.cos(40 * t) * SIGMA_Z + np.sin(40 * t) * SIGMA_X), t_f)


# --- states -------------------------------------------------------------------

def test_density_operator_rejects_bad_matrices():
    with pytest.raises(ValueError, match="Hermitian"):
        DensityOperator(np.array([[0.5, 1.0], [0.0, 0.5]]))
    with pytest.raises(ValueError, match="trace"):
        DensityOperator(np.eye(2))
    with pytest.raises(ValueError, match="negative"):
        DensityOperator(np.array([[1.5, 0], [0, -0.5]]))
    with pytest.raises(ValueError, match="square"):
        DensityOperator(np.ones((2, 3)) / 2)


def test_trace_distance_of_orthogonal_pure_states_is_one():
    assert trace_distance(basis_state(2, 0).matrix, basis_state(2, 1).matrix) == pytest.approx(1.0)
    plus = pure_state([1, 1])
    assert trace_distance(plus.matrix, plus.matrix) == pytest.approx(0.0, abs=1e-15)


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.0, 0.2, 0.1]))
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.1, 0.2]))
    g = TimeGrid.uniform(0.3, 7)
    assert g.n_steps == 7 and g.t_f == 0.3


def test_noise_config_rejects_negative_gamma():
    with pytest.raises(ValueError):
        NoiseConfig(-1e-3)


# --- generator ------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**31 - 1), st.floats(0, 5))
def test_dissipator_is_traceless_and_hermiticity_preserving(n, seed, gamma):
    rng = np.random.default_rng(seed)
    h, r = random_hermitian(rng, n), random_state(rng, n)
    d = master_rhs(h, r, gamma)
    assert abs(np.trace(d)) < 1e-10
    np.testing.assert_allclose(d, d.conj().T, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_dissipator_matches_double_commutator(n, seed):
    rng = np.random.default_rng(seed)
    h, r = random_hermitian(rng, n), random_state(rng, n)
    comm = lambda a, b: a @ b - b @ a
    np.testing.assert_allclose(dissipator(h, r, 0.3), -0.3 * comm(h, comm(h, r)), atol=1e-12)


def test_dissipator_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        dissipator(np.eye(3), np.eye(2) / 2, 0.1)


# --- propagation ------------------------------------------------------------------

def test_unitary_limit_matches_matrix_exponential():
    rng = np.random.default_rng(3)
    h = random_hermitian(rng, 4, 20.0)
    rho0 = random_state(rng, 4)
    grid = TimeGrid.uniform(0.2, 20)
    states = propagate(HamiltonianTrajectory.constant(h, 0.2), rho0, NoiseConfig(0.0), grid,
                       rtol=1e-10, atol=1e-12)
    for t, r in zip(grid.times, states.matrices):
        u = expm(-1j * h * t)
        np.testing.assert_allclose(r, u @ rho0 @ u.conj().T, atol=1e-8)


def test_constant_h_dephasing_in_eigenbasis():
    # for constant H each eigenbasis coherence decays as exp(-(i w + gamma w^2) t)
    rng = np.random.default_rng(5)
    h = random_hermitian(rng, 3, 10.0)
    e, v = np.linalg.eigh(h)
    rho0 = random_state(rng, 3)
    gamma, t_f = 0.02, 0.5
    grid = TimeGrid.uniform(t_f, 10)
    r = propagate(HamiltonianTrajectory.constant(h, t_f), rho0, NoiseConfig(gamma), grid,
                  rtol=1e-10, atol=1e-13).final.matrix
    w = e[:, None] - e[None, :]
    want = (v.conj().T @ rho0 @ v) * np.exp(-(1j * w + gamma * w ** 2) * t_f)
    np.testing.assert_allclose(v.conj().T @ r @ v, want, atol=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.0, 0.01, 10.0]))
def test_diagonal_states_are_stationary(seed, gamma):
    rng = np.random.default_rng(seed)
    h = np.diag(rng.normal(size=3) * 50)
    p = rng.dirichlet(np.ones(3))
    rho0 = np.diag(p).astype(complex)
    states = propagate(HamiltonianTrajectory.constant(h, 0.1), rho0, NoiseConfig(gamma),
                       TimeGrid.uniform(0.1, 20))
    assert np.max(np.abs(states.matrices - rho0)) <= 1e-9


def test_trace_and_positivity_preserved_for_driven_qubit():
    states = propagate(driven_qubit(), basis_state(2, 0), NoiseConfig(0.01),
                       TimeGrid.uniform(0.05, 200))
    traces = np.einsum("nii->n", states.matrices)
    assert np.max(np.abs(traces - 1)) <= 1e-9
    assert min(np.linalg.eigvalsh(m).min() for m in states.matrices) > -1e-9


def test_rk4_agrees_with_dopri5():
    args = (driven_qubit(), basis_state(2, 0), NoiseConfig(0.01), TimeGrid.uniform(0.05, 200))
    a = propagate(*args, rtol=1e-10, atol=1e-12).final.matrix
    b = propagate(*args, method="rk4", rk4_substeps=4).final.matrix
    assert np.max(np.abs(a - b)) < 1e-8


def test_propagate_rejects_mismatched_grid():
    with pytest.raises(ValueError, match="span"):
        propagate(driven_qubit(0.05), basis_state(2, 0), NoiseConfig(0.0), TimeGrid.uniform(0.04, 4))


def test_dopri5_raises_on_blowup():
    with pytest.raises(IntegrationError) as info:
        dopri5(lambda t, y: y * y, np.array([0.0, 2.0]), np.array([1.0 + 0j]))
    assert info.value.t < 1.0 + 1e-6


def test_finite_difference_derivative_is_flagged_and_accurate():
    traj = driven_qubit()
    assert traj.metadata["dh_dt"] == "finite-difference"
    t = 0.013
    want = 0.5 * 150 * 40 * (-np.sin(40 * t) * SIGMA_Z + np.cos(40 * t) * SIGMA_X)
    np.testing.assert_allclose(traj.dh_dt(t), want, rtol=1e-6, atol=1e-6)


# --- stochastic unraveling --------------------------------------------------------

def test_stochastic_trajectory_stays_pure():
    grid = TimeGrid.uniform(0.05, 2000)
    r = stochastic_trajectory(driven_qubit(), np.array([1.0, 0.0]), NoiseConfig(0.01), grid, seed=7)
    assert r.purity() == pytest.approx(1.0, abs=1e-10)


def test_stochastic_ensemble_independent_of_chunking():
    grid = TimeGrid.uniform(0.05, 2000)
    args = (driven_qubit(), np.array([1.0, 0.0]), NoiseConfig(0.01), grid, 40)
    a = stochastic_ensemble(*args, seed=11, chunk=7).matrix
    b = stochastic_ensemble(*args, seed=11, chunk=40).matrix
    np.testing.assert_allclose(a, b, atol=1e-14)


def test_stochastic_ensemble_converges_to_master_equation():
    grid = TimeGrid.uniform(0.05, 2000)
    traj = driven_qubit()
    exact = propagate(traj, basis_state(2, 0), NoiseConfig(0.01), grid).final.matrix
    mean = stochastic_ensemble(traj, np.array([1.0, 0.0]), NoiseConfig(0.01), grid, 2000, seed=1)
    assert trace_distance(mean.matrix, exact) < 0.05


def test_stochastic_rejects_coarse_grid():
    with pytest.raises(ValueError, match="coarse"):
        stochastic_trajectory(driven_qubit(), np.array([1.0, 0.0]), NoiseConfig(10.0),
                              TimeGrid.uniform(0.05, 10), seed=0)


# --- instantaneous eigenbasis -------------------------------------------------------

def test_eigensystem_gauge_is_smooth_along_a_path():
    traj = driven_qubit()
    series = eigensystem_series(traj, np.linspace(0, 0.05, 400))
    for a, b in zip(series, series[1:]):
        overlap = np.sum(a.vectors.conj() * b.vectors, axis=0)
        assert np.all(overlap.real > 0.99)


def test_degenerate_spectrum_warns():
    with pytest.warns(UserWarning, match="degenerate"):
        es = instantaneous_eigensystem(np.eye(2))
    assert es.degenerate


def test_nonadiabatic_coupling_matches_finite_difference():
    traj = driven_qubit()
    t, dt = 0.02, 1e-7
    es = instantaneous_eigensystem(traj(t))
    ahead = instantaneous_eigensystem(traj(t + dt), es)
    behind = instantaneous_eigensystem(traj(t - dt), es)
    dv = (ahead.vectors - behind.vectors) / (2 * dt)
    w = nonadiabatic_coupling(es, traj.dh_dt(t))
    fd = es.vectors.conj().T @ dv
    off = ~np.eye(2, dtype=bool)
    np.testing.assert_allclose(w[off], fd[off], rtol=1e-5)


def test_eigenbasis_equations_reproduce_lab_frame_rhs():
    # d/dt (V^+ rho V) = V^+ rho' V + (dV^+) rho V + V^+ rho dV
    traj = driven_qubit()
    t, gamma = 0.017, 0.01
    rho = random_state(np.random.default_rng(2), 2)
    es = instantaneous_eigensystem(traj(t))
    v = es.vectors
    w = nonadiabatic_coupling(es, traj.dh_dt(t))
    r_eig = v.conj().T @ rho @ v
    got = eigenbasis_equations_of_motion(es, traj.dh_dt(t), r_eig, gamma)
    dv = v @ w
    want = (v.conj().T @ master_rhs(traj(t), rho, gamma) @ v
            + dv.conj().T @ rho @ v + v.conj().T @ rho @ dv)
    np.testing.assert_allclose(got, want, atol=1e-9)


def test_populations_and_coherences_split():
    h = 0.5 * 150 * SIGMA_X
    es = instantaneous_eigensystem(h)
    pops, coh = eigenbasis_populations_coherences(basis_state(2, 0), es)
    np.testing.assert_allclose(pops, [0.5, 0.5])
    assert np.sum(np.abs(coh)) == pytest.approx(1.0)
