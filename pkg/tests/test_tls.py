import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from actionnoise.core import NoiseConfig, TimeGrid, propagate
from actionnoise.metrics import adiabatic_mu, uhlmann_fidelity
from actionnoise.tls import (
    INITIAL_STATE, TARGET_STATE, ProtocolError, arp_first_peak_time, arp_protocol,
    auxiliary_angles, invariant_residual, read_table, sp_knob_bounds, sp_protocol, write_table,
)

D0 = 150.0


def noise_free_fidelity(proto, n_steps=400):
    grid = TimeGrid.uniform(proto.t_f, n_steps)
    final = propagate(proto.trajectory(), INITIAL_STATE, NoiseConfig(0.0), grid,
                      rtol=1e-10, atol=1e-12).final
    return uhlmann_fidelity(final, TARGET_STATE)


def arp_fidelity_closed_form(t_f):
    # constant-rate rotation of the field: in the co-rotating frame the
    # Hamiltonian is static, giving a Rabi-type formula for the inversion
    w = math.pi / t_f
    rabi = math.hypot(D0, w)
    leak = (w / rabi) ** 2 * math.sin(rabi * t_f / 2) ** 2
    return math.sqrt(1 - leak)


def test_arp_fields_and_gap():
    p = arp_protocol(D0, 0.05)
    t = np.linspace(0, 0.05, 11)
    d, o = p.fields(t)
    np.testing.assert_allclose(d, D0 * np.cos(math.pi * t / 0.05), atol=1e-12)
    np.testing.assert_allclose(o, D0 * np.sin(math.pi * t / 0.05), atol=1e-12)
    np.testing.assert_allclose(p.gap(t), D0)


@pytest.mark.parametrize("t_f", [0.01, 0.02, arp_first_peak_time(D0), 0.05])
def test_arp_fidelity_matches_rotating_frame_formula(t_f):
    assert noise_free_fidelity(arp_protocol(D0, t_f)) == pytest.approx(
        arp_fidelity_closed_form(t_f), abs=1e-7)


def test_arp_first_peak_time_is_closed_form_root():
    t = arp_first_peak_time(D0)
    assert math.hypot(D0 * t, math.pi) == pytest.approx(2 * math.pi, rel=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.005, 0.2), st.floats(0, 1))
def test_arp_mu_constant(t_f, frac):
    p = arp_protocol(D0, t_f)
    want = math.pi / (2 * D0 * t_f)
    assert p.mu(frac * t_f) == pytest.approx(want, rel=1e-12)
    assert adiabatic_mu(p.trajectory(), frac * t_f) == pytest.approx(want, rel=1e-10)


@pytest.mark.parametrize("t_f,knob", [(0.005, 0.0), (0.0363, 0.0), (0.1, 0.5), (0.1, -1.0)])
def test_sp_reaches_target_without_noise(t_f, knob):
    p = sp_protocol(D0, t_f, knob)
    assert noise_free_fidelity(p) >= 1 - 1e-6


@pytest.mark.parametrize("t_f,knob", [(0.0363, 0.0), (0.1, 0.9)])
def test_sp_invariant_residual_and_endpoints(t_f, knob):
    p = sp_protocol(D0, t_f, knob, self_test=False)
    assert invariant_residual(p, np.linspace(0, t_f, 101)) < 1e-8 * D0
    _, o = p.fields(np.array([0.0, t_f]))
    np.testing.assert_allclose(o, 0.0, atol=1e-9 * D0)


def test_sp_mu_vectorized_matches_eigenbasis_definition():
    p = sp_protocol(D0, 0.05, 0.2, self_test=False)
    t = np.linspace(0.001, 0.049, 9)
    traj = p.trajectory()
    np.testing.assert_allclose(p.mu(t), [adiabatic_mu(traj, x) for x in t], rtol=1e-9)


def test_sp_knob_outside_range_raises_with_singular_time():
    lo, hi = sp_knob_bounds(D0, 0.1)
    with pytest.raises(ProtocolError, match="diverges first at t"):
        sp_protocol(D0, 0.1, hi + 0.1)
    with pytest.raises(ProtocolError):
        sp_protocol(D0, 0.1, lo - 0.01)


def test_protocol_rejects_nonpositive_parameters():
    with pytest.raises(ValueError):
        arp_protocol(D0, 0.0)
    with pytest.raises(ValueError):
        arp_protocol(-1.0, 0.1)


def test_auxiliary_angles_flags_singularity():
    theta = lambda t: (math.pi * t, math.pi)
    alpha = lambda t: (math.pi * (0.5 - t), -math.pi)  # sin(alpha) = 0 at t = 0.5
    with pytest.raises(ProtocolError, match="singular"):
        auxiliary_angles(theta, alpha, 1.0)


def test_table_round_trip():
    p = sp_protocol(D0, 0.05, 0.3, self_test=False)
    buf = io.StringIO()
    write_table(p, buf, n_points=51)
    buf.seek(0)
    meta, rows = read_table(buf)
    assert meta["kind"] == "SP" and float(meta["knob"]) == 0.3
    d, o = p.fields(rows[:, 0])
    np.testing.assert_array_equal(rows[:, 1], d)
    np.testing.assert_array_equal(rows[:, 2], o)
