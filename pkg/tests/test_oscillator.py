import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from actionnoise.core import NoiseConfig, TimeGrid, propagate
from actionnoise.integrate import IntegrationError
from actionnoise.metrics import uhlmann_fidelity
from actionnoise.oscillator import (
    FrequencyProtocol, GaussianState, UncertaintyError, constant_mu_ramp, ermakov_sp,
    fock_density, fock_moments, fock_trajectory, gaussian_fidelity, propagate_moments,
    read_table, write_table,
)

W0, WF = 2.5e6, 2.5e3


@st.composite
def gaussian_states(draw):
    # mixed, squeezed, rotated and displaced, kept small enough for a 60-level basis
    nu = draw(st.floats(0.5, 0.9))
    r = draw(st.floats(-0.4, 0.4))
    phi = draw(st.floats(0, math.pi))
    c, s = math.cos(phi), math.sin(phi)
    rot = np.array([[c, -s], [s, c]])
    cov = nu * rot @ np.diag([math.exp(2 * r), math.exp(-2 * r)]) @ rot.T
    q = draw(st.floats(-0.7, 0.7))
    p = draw(st.floats(-0.7, 0.7))
    return GaussianState(q, p, cov)


# --- states and fidelity ---------------------------------------------------------

def test_uncertainty_violation_raises():
    with pytest.raises(UncertaintyError):
        GaussianState(0, 0, np.diag([0.4, 0.5]))
    with pytest.raises(ValueError, match="symmetric"):
        GaussianState(0, 0, np.array([[1.0, 0.1], [0.2, 1.0]]))


def test_raw_moments_round_trip():
    s = GaussianState(0.3, -0.2, np.array([[0.7, 0.1], [0.1, 0.6]]))
    t = GaussianState.from_raw(*s.raw())
    np.testing.assert_allclose(t.cov, s.cov, atol=1e-15)
    assert (t.mean_q, t.mean_p) == pytest.approx((0.3, -0.2))


def test_ground_state_is_pure():
    g = GaussianState.ground(3.0)
    assert g.det == pytest.approx(0.25) and g.purity == pytest.approx(1.0)
    assert gaussian_fidelity(g, g) == pytest.approx(1.0)


def test_coherent_state_overlap():
    # |<a|b>| = exp(-|a-b|^2/2) with |a-b|^2 = (dq^2 + dp^2)/2 at unit frequency
    a = GaussianState.ground(1.0, 0.3, -0.1)
    b = GaussianState.ground(1.0, -0.2, 0.4)
    assert gaussian_fidelity(a, b) == pytest.approx(math.exp(-(0.5 ** 2 + 0.5 ** 2) / 4))


@settings(max_examples=15, deadline=None)
@given(gaussian_states(), gaussian_states())
def test_gaussian_fidelity_matches_fock_basis(a, b):
    want = uhlmann_fidelity(fock_density(a, 60), fock_density(b, 60))
    assert gaussian_fidelity(a, b) == pytest.approx(want, abs=1e-7)


@settings(max_examples=15, deadline=None)
@given(gaussian_states())
def test_fock_density_reproduces_moments(s):
    np.testing.assert_allclose(fock_moments(fock_density(s, 60)), s.raw(), atol=1e-9)


# --- protocols ---------------------------------------------------------------------

@pytest.mark.parametrize("make", [constant_mu_ramp, ermakov_sp])
def test_frequency_endpoints(make):
    p = make(W0, WF, 1e-2)
    np.testing.assert_allclose(p.omega_sq(np.array([0.0, 1e-2])), [W0 ** 2, WF ** 2], rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-4, 1.0), st.floats(0, 1))
def test_constant_mu_ramp_has_constant_mu(t_f, frac):
    p = constant_mu_ramp(W0, WF, t_f)
    want = abs(WF - W0) / (W0 * WF * t_f)
    assert p.mu(frac * t_f) == pytest.approx(want, rel=1e-10)


def test_omega_sq_rate_matches_finite_difference():
    p = ermakov_sp(W0, WF, 1e-3)
    t, h = 4e-4, 1e-10
    fd = (p.omega_sq(t + h) - p.omega_sq(t - h)) / (2 * h)
    assert p.omega_sq_rate(t) == pytest.approx(fd, rel=1e-5)


def test_short_ermakov_ramp_inverts_the_trap():
    assert ermakov_sp(W0, WF, 3e-5).metadata["inverted_trap"]
    assert not ermakov_sp(W0, WF, 1e-1).metadata["inverted_trap"]


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        FrequencyProtocol("Linear", 1.0, 2.0, 1.0)


# --- moment propagation ----------------------------------------------------------------

@pytest.mark.parametrize("t_f", [1e-3, 1e-2, 1e-1])
def test_noise_free_shortcut_reaches_target_ground_state(t_f):
    s = propagate_moments(ermakov_sp(W0, WF, t_f), GaussianState.ground(W0), NoiseConfig(0.0),
                          TimeGrid.uniform(t_f, 50))
    assert gaussian_fidelity(s.final, GaussianState.ground(WF)) >= 1 - 1e-9


def test_static_trap_noise_conserves_energy_and_mixes_the_state():
    # dephasing in the energy basis: <H> is constant, det V grows
    w = 3.0
    p = constant_mu_ramp(w, w, 2.0)
    s0 = GaussianState(0.5, 0.2, np.diag([0.15, 2.0]))
    s = propagate_moments(p, s0, NoiseConfig(0.3), TimeGrid.uniform(2.0, 40))
    q, pm, qq, pp, _ = s.raw.T
    energy = 0.5 * pp + 0.5 * w * w * qq
    np.testing.assert_allclose(energy, energy[0], rtol=1e-10)
    assert np.all(np.diff(s.determinants()) >= -1e-12)
    assert s.determinants()[-1] > s0.det


def test_noise_lowers_fidelity_and_purity():
    t_f = 1e-2
    target = GaussianState.ground(WF)
    args = (ermakov_sp(W0, WF, t_f), GaussianState.ground(W0))
    clean = propagate_moments(*args, NoiseConfig(0.0), TimeGrid.uniform(t_f, 50)).final
    noisy = propagate_moments(*args, NoiseConfig(0.8e-3), TimeGrid.uniform(t_f, 50)).final
    assert gaussian_fidelity(noisy, target) < gaussian_fidelity(clean, target)
    assert noisy.purity < 1.0


@pytest.mark.parametrize("make", [constant_mu_ramp, ermakov_sp])
def test_moments_match_fock_oracle(make):
    proto = make(2.0, 1.0, 1.5)
    s0 = GaussianState(0.3, -0.2, np.diag([0.3, 1.0]))
    grid = TimeGrid.uniform(1.5, 15)
    moments = propagate_moments(proto, s0, NoiseConfig(0.2), grid).raw
    states = propagate(fock_trajectory(proto, 40), fock_density(s0, 40), NoiseConfig(0.2), grid,
                       rtol=1e-10, atol=1e-12)
    fock = np.array([fock_moments(r) for r in states])
    scale = np.max(np.abs(moments), axis=0)
    assert np.max(np.abs(fock - moments) / scale) < 1e-6


def test_runaway_in_inverted_trap_raises():
    with pytest.raises(IntegrationError):
        propagate_moments(ermakov_sp(W0, WF, 3.16e-5), GaussianState.ground(W0),
                          NoiseConfig(0.8e-3), TimeGrid.uniform(3.16e-5, 20))


def test_moment_csv_and_protocol_table():
    s = propagate_moments(constant_mu_ramp(2.0, 1.0, 1.0), GaussianState.ground(2.0),
                          NoiseConfig(0.0), TimeGrid.uniform(1.0, 4))
    buf = io.StringIO()
    s.to_csv(buf)
    lines = [l for l in buf.getvalue().splitlines() if not l.startswith("#")]
    assert lines[0] == "t,q,p,qq,pp,qp_sym" and len(lines) == 6
    assert float(lines[1].split(",")[3]) == pytest.approx(0.25)

    p = ermakov_sp(W0, WF, 1e-3)
    buf = io.StringIO()
    write_table(p, buf, n_points=11)
    buf.seek(0)
    header, rows = read_table(buf)
    assert header["kind"] == "ErmakovSP"
    np.testing.assert_array_equal(rows[:, 1], p.omega_sq(rows[:, 0]))
