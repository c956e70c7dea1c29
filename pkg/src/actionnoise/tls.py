"""Two-level population inversion: ARP and invariant-based shortcut protocols.

The Hamiltonian is ``H(t) = Delta(t)/2 sigma_z + Omega(t)/2 sigma_x``. Every
protocol starts from ``H(0) = Delta0/2 sigma_z`` and ends at
``H(t_f) = -Delta0/2 sigma_z``. The state starts in ``|0> = (1, 0)`` and the
target is ``|1> = (0, 1)``, the eigenvector of ``H(t_f)`` adiabatically
connected to ``|0>``. With ``sigma_z = diag(1, -1)`` and ``Delta0 > 0`` this
is the upper level; the dynamics is symmetric under relabelling the levels.

Shortcut construction
---------------------
The Lewis-Riesenfeld invariant ``I = (sin th cos al sx + sin th sin al sy +
cos th sz) / 2`` is conserved when

    Omega = -th' / sin(al),      Delta = al' - th' cot(th) cot(al).

``th`` is the quintic smoothstep from 0 to pi (``th' = th'' = 0`` at both
ends), so the state follows the invariant eigenvector from ``|0>`` to ``|1>``
exactly. Writing ``al = -pi/2 + eps`` the fields become
``Omega = th'/cos(eps)`` and ``Delta = eps' + th' cot(th) tan(eps)``.
Near t = 0, ``th' cot(th) -> 3/t`` and ``tan(eps) -> eps'(0) t``, so
``Delta(0) = 4 eps'(0)``; the phase profile is therefore

    eps(t) = Delta0 t_f/4 * s(1-s) + kappa * 16 s^2 (1-s)^2,   s = t/t_f

which has ``eps'(0) = Delta0/4`` and ``eps'(t_f) = -Delta0/4``. The public
``knob`` is the mid-protocol phase offset ``eps(t_f/2)``; it must keep
``|eps| < pi/2`` on the whole interval.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, TextIO, Union

import numpy as np

from .core import (
    SIGMA_X, SIGMA_Y, SIGMA_Z, HamiltonianTrajectory, NoiseConfig, TimeGrid,
    basis_state, propagate,
)

__all__ = [
    "ProtocolError", "TlsProtocol", "arp_protocol", "sp_protocol", "sp_knob_bounds",
    "auxiliary_angles", "tls_hamiltonian", "tls_trajectory", "invariant_residual",
    "arp_first_peak_time", "INITIAL_STATE", "TARGET_STATE", "write_table",
    "read_table",
]

INITIAL_STATE = basis_state(2, 0)
TARGET_STATE = basis_state(2, 1)

SP_FIDELITY_TOL = 1e-6


class ProtocolError(ValueError):
    """Invalid protocol parameters (singular fields, failed self-test)."""


def tls_hamiltonian(delta, omega) -> np.ndarray:
    return 0.5 * (delta * SIGMA_Z + omega * SIGMA_X)


def _smoothstep(s):
    return s ** 3 * (10 - 15 * s + 6 * s * s)


def arp_first_peak_time(delta0: float) -> float:
    """First noise-free ARP inversion time, sqrt(3) pi / Delta0 (for n = 0)."""
    return np.sqrt(3.0) * np.pi / delta0


@dataclass(frozen=True)
class TlsProtocol:
    """Closed-form TLS control protocol.

    ``knob`` is used by SP only and ``n`` (the ARP winding) by ARP only.
    Field methods accept scalars or arrays of times.
    """

    kind: str
    delta0: float
    t_f: float
    knob: float = 0.0
    n: int = 0

    def __post_init__(self):
        if self.kind not in ("ARP", "SP"):
            raise ValueError(f"unknown TLS protocol kind {self.kind!r}")
        if not self.delta0 > 0 or not self.t_f > 0:
            raise ValueError("delta0 and t_f must be positive")

    # --- fields ----------------------------------------------------------
    def fields(self, t):
        """(Delta(t), Omega(t)) in rad/s."""
        if self.kind == "ARP":
            phi = self._arp_rate * np.asarray(t, dtype=float)
            return self.delta0 * np.cos(phi), self.delta0 * np.sin(phi)
        return self._sp_fields(t, derivatives=False)

    def field_rates(self, t):
        """(dDelta/dt, dOmega/dt)."""
        if self.kind == "ARP":
            phi = self._arp_rate * np.asarray(t, dtype=float)
            w = self._arp_rate
            return -self.delta0 * w * np.sin(phi), self.delta0 * w * np.cos(phi)
        return self._sp_fields(t, derivatives=True)

    def delta_of_t(self, t):
        return self.fields(t)[0]

    def omega_of_t(self, t):
        return self.fields(t)[1]

    def hamiltonian(self, t: float) -> np.ndarray:
        d, o = self.fields(t)
        return tls_hamiltonian(float(d), float(o))

    def dh_dt(self, t: float) -> np.ndarray:
        dd, do = self.field_rates(t)
        return tls_hamiltonian(float(dd), float(do))

    def trajectory(self) -> HamiltonianTrajectory:
        return HamiltonianTrajectory(2, self.hamiltonian, self.t_f, self.dh_dt,
                                     {"protocol": self.kind})

    def gap(self, t):
        d, o = self.fields(t)
        return np.hypot(d, o)

    def mu(self, t):
        """Adiabatic parameter |Delta Omega' - Omega Delta'| / (2 E^3)."""
        d, o = self.fields(t)
        dd, do = self.field_rates(t)
        return np.abs(d * do - o * dd) / (2.0 * (d * d + o * o) ** 1.5)

    # --- ARP ---------------------------------------------------------------
    @property
    def _arp_rate(self):
        return (np.pi + 2 * np.pi * self.n) / self.t_f

    # --- SP ----------------------------------------------------------------
    @property
    def _kappa(self):
        return self.knob - self.delta0 * self.t_f / 16.0

    def angles(self, t):
        """SP auxiliary angles (theta, dtheta, alpha, dalpha)."""
        if self.kind != "SP":
            raise ValueError("auxiliary angles exist for SP protocols only")
        t = np.asarray(t, dtype=float)
        s = t / self.t_f
        u = (self.t_f - t) / self.t_f
        theta = np.pi * _smoothstep(s)
        dtheta = np.pi * 30 * s * s * u * u / self.t_f
        eps, deps, _ = self._phase(s, u)
        return theta, dtheta, -np.pi / 2 + eps, deps

    def _phase(self, s, u):
        a, k, tf = self.delta0 * self.t_f / 4.0, self._kappa, self.t_f
        eps = a * s * u + 16 * k * (s * u) ** 2
        deps = self.delta0 / 4.0 * (u - s) + 32 * k * s * u * (u - s) / tf
        ddeps = -self.delta0 / (2 * tf) + 32 * k * (1 - 6 * s + 6 * s * s) / tf ** 2
        return eps, deps, ddeps

    def _sp_fields(self, t, derivatives):
        t_arr = np.asarray(t, dtype=float)
        tf = self.t_f
        s = t_arr / tf
        u = (tf - t_arr) / tf
        interior = (t_arr > 0) & (t_arr < tf)
        si = np.where(interior, s, 0.5)
        ui = np.where(interior, u, 0.5)

        dth = np.pi * 30 * si * si * ui * ui / tf
        ddth = np.pi * 60 * si * ui * (ui - si) / tf ** 2
        # cot(theta) evaluated against the nearer pole to avoid cancellation
        near_start = si <= 0.5
        x = np.pi * _smoothstep(np.where(near_start, si, ui))
        cot_th = np.where(near_start, 1.0, -1.0) / np.tan(x)
        eps, deps, ddeps = self._phase(si, ui)
        tan_e, cos_e = np.tan(eps), np.cos(eps)

        if not derivatives:
            delta = deps + dth * cot_th * tan_e
            omega = dth / cos_e
            delta = np.where(interior, delta, np.where(t_arr <= 0, self.delta0, -self.delta0))
            omega = np.where(interior, omega, 0.0)
        else:
            csc2 = 1.0 + cot_th ** 2
            sec2 = 1.0 / cos_e ** 2
            delta = (ddeps + ddth * cot_th * tan_e - dth ** 2 * csc2 * tan_e
                     + dth * cot_th * deps * sec2)
            omega = ddth / cos_e + dth * deps * np.sin(eps) * sec2
            # endpoint limits from the series of th'cot(th) and tan(eps)
            edge = -13 * self.delta0 / (8 * tf) + 80 * self._kappa / tf ** 2
            delta = np.where(interior, delta, edge)
            omega = np.where(interior, omega, 0.0)
        if np.ndim(t) == 0:
            return float(delta), float(omega)
        return delta, omega


def arp_protocol(delta0: float, t_f: float, n: int = 0) -> TlsProtocol:
    """Constant-mu rotation Delta = D0 cos(w t), Omega = D0 sin(w t), w = (1+2n) pi / t_f."""
    return TlsProtocol("ARP", float(delta0), float(t_f), n=int(n))


def sp_knob_bounds(delta0: float, t_f: float):
    """Open interval of knob values keeping |eps(t)| < pi/2 on (0, t_f)."""
    a = delta0 * t_f / 4.0
    lo = -np.pi / 2
    if a < 4 * np.pi:
        hi = np.pi / 2
    else:
        # kappa < -a^2/(32 pi), attained at s(1-s) = pi/a
        hi = -a * a / (32 * np.pi) + a / 4.0
    return lo, hi


def _first_singular_time(proto: TlsProtocol, n: int = 20001):
    s = np.linspace(0.0, 1.0, n)[1:-1]
    eps, _, _ = proto._phase(s, 1 - s)
    bad = np.nonzero(np.abs(eps) >= np.pi / 2)[0]
    return None if len(bad) == 0 else float(s[bad[0]] * proto.t_f)


def sp_protocol(delta0: float, t_f: float, knob: float = 0.0, *,
                self_test: bool = True, n_steps: int = 400) -> TlsProtocol:
    """Invariant-based shortcut to population inversion.

    ``knob`` is the mid-protocol phase offset (rad); larger ``|knob|`` shrinks
    ``cos(eps)`` and widens the mid-protocol gap. With ``self_test`` the
    noise-free inversion is propagated and must reach infidelity <= 1e-6.

    Raises:
        ProtocolError: if the knob makes Omega singular (the first singular
            time is reported) or the self-test fails.
    """
    proto = TlsProtocol("SP", float(delta0), float(t_f), knob=float(knob))
    lo, hi = sp_knob_bounds(delta0, t_f)
    if not lo < knob < hi:
        t_bad = _first_singular_time(proto)
        where = f"; Omega diverges first at t = {t_bad:.6g} s" if t_bad is not None else ""
        raise ProtocolError(
            f"knob {knob} outside the valid range ({lo:.6g}, {hi:.6g}){where}")
    if self_test:
        grid = TimeGrid.uniform(t_f, n_steps)
        final = propagate(proto.trajectory(), INITIAL_STATE, NoiseConfig(0.0), grid).final
        infidelity = 1.0 - np.sqrt(max(np.real(final.matrix[1, 1]), 0.0))
        if infidelity > SP_FIDELITY_TOL:
            raise ProtocolError(f"SP self-test failed: noise-free infidelity {infidelity:.3e}")
    return proto


def auxiliary_angles(theta: Callable, alpha: Callable, t_f: float, *, n_check: int = 2001):
    """Invert the invariant condition for ``H = Delta/2 sz + Omega/2 sx``.

    ``theta(t)`` and ``alpha(t)`` return ``(value, time derivative)``.
    Returns ``(delta_of_t, omega_of_t)`` with ``Omega = -th'/sin(al)`` and
    ``Delta = al' - th' cot(th) cot(al)``. The interior of ``[0, t_f]`` is
    scanned for singular points first.
    """
    def omega_of_t(t):
        th, dth = theta(t)
        al, _ = alpha(t)
        return -dth / np.sin(al)

    def delta_of_t(t):
        th, dth = theta(t)
        al, dal = alpha(t)
        cot_al = np.cos(al) / np.sin(al)
        # th' cot(th) cot(al) is taken as 0 where th' or cot(al) vanishes
        prod = np.where((dth == 0) | (np.abs(cot_al) < 1e-15), 0.0,
                        dth * cot_al / np.where(np.tan(th) == 0, np.nan, np.tan(th)))
        return dal - prod

    for t in np.linspace(0.0, t_f, n_check)[1:-1]:
        al, _ = alpha(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            d, o = delta_of_t(t), omega_of_t(t)
        if not (np.isfinite(d) and np.isfinite(o)) or abs(np.sin(al)) < 1e-12:
            raise ProtocolError(f"singular cot(theta) cot(alpha) at t = {t:.6g}")
    return delta_of_t, omega_of_t


def tls_trajectory(delta_of_t, omega_of_t, t_f: float) -> HamiltonianTrajectory:
    return HamiltonianTrajectory(
        2, lambda t: tls_hamiltonian(delta_of_t(t), omega_of_t(t)), t_f)


def invariant_residual(proto: TlsProtocol, times) -> float:
    """max_t max|dI/dt + i[H, I]| for the SP invariant (zero for an exact invariant)."""
    worst = 0.0
    for t in np.asarray(times, dtype=float):
        th, dth, al, dal = proto.angles(t)
        n = np.array([np.sin(th) * np.cos(al), np.sin(th) * np.sin(al), np.cos(th)])
        dn = (dth * np.array([np.cos(th) * np.cos(al), np.cos(th) * np.sin(al), -np.sin(th)])
              + dal * np.array([-np.sin(th) * np.sin(al), np.sin(th) * np.cos(al), 0.0]))
        inv = 0.5 * (n[0] * SIGMA_X + n[1] * SIGMA_Y + n[2] * SIGMA_Z)
        dinv = 0.5 * (dn[0] * SIGMA_X + dn[1] * SIGMA_Y + dn[2] * SIGMA_Z)
        h = proto.hamiltonian(t)
        worst = max(worst, float(np.max(np.abs(dinv + 1j * (h @ inv - inv @ h)))))
    return worst


# --- tabulated text format ---------------------------------------------------

def write_table(proto: TlsProtocol, dest: Union[str, TextIO], n_points: int = 1001) -> None:
    """Write ``# key: value`` header lines then ``t delta omega`` rows."""
    t = np.linspace(0.0, proto.t_f, n_points)
    d, o = proto.fields(t)
    lines = [f"# kind: {proto.kind}", f"# delta0: {proto.delta0!r}", f"# t_f: {proto.t_f!r}"]
    lines.append(f"# knob: {proto.knob!r}" if proto.kind == "SP" else f"# n: {proto.n}")
    lines.append("# columns: t delta omega")
    lines += [f"{a!r} {b!r} {c!r}" for a, b, c in zip(t.tolist(), d.tolist(), o.tolist())]
    text = "\n".join(lines) + "\n"
    if isinstance(dest, str):
        with open(dest, "w", encoding="ascii") as fh:
            fh.write(text)
    else:
        dest.write(text)


def read_table(src: Union[str, TextIO]):
    """Inverse of :func:`write_table`: returns (header dict, array of rows)."""
    if isinstance(src, str):
        with open(src, encoding="ascii") as fh:
            text = fh.read()
    else:
        text = src.read()
    meta, rows = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
        elif line.strip():
            rows.append([float(x) for x in line.split()])
    return meta, np.array(rows)
